use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use preamble_forge::{Error, Mask, Mode};
use preamble_forge_cli::output::{gnuplot_script, opt, write_atomic, write_csv, write_json, Outputs};
use preamble_forge_cli::{studies, ScenarioFile};

#[derive(Parser)]
#[command(name = "preamble-forge", version, about = "Preamble design under an OOB emission budget")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one design problem and write the preamble.
    Design(DesignArgs),
    /// ZF MSE versus SNR for juxtaposed AFV/EFV and flat preambles.
    SweepMse(Common),
    /// Fractional OOB versus MSE cap, per SNR.
    Tradeoff(Common),
    /// Two-antenna comb preambles and per-channel bounds.
    Mimo(Common),
    /// Fractional OOB of AFV/EFV with and without pinching.
    Table2(Common),
    /// Solver iteration counts and timings for growing n.
    Complexity(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory (defaults to the scenario's `outputs.directory`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DesignArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    mask: Option<MaskArg>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    pinch: Option<Switch>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MaskArg {
    Afv,
    Efv,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    MinNef,
    MinOob,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

/// Validation problems map to exit code 2, everything else to 1.
#[derive(Debug)]
struct Invalid(String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn env_override<T: std::str::FromStr>(name: &str) -> Result<Option<T>> {
    match std::env::var(name) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Invalid(format!("{name}={v} is not valid")).into()),
        Err(_) => Ok(None),
    }
}

struct Run {
    scn: ScenarioFile,
    out: Outputs,
}

fn prepare(common: &Common) -> Result<Run> {
    let mut scn = ScenarioFile::load(&common.scenario)?;
    if let Some(seed) = env_override::<u64>("PF_SEED")? {
        scn.sweep.seed = seed;
    }
    let dir = common.out.clone().unwrap_or_else(|| scn.outputs.directory.clone());
    Ok(Run {
        scn,
        out: Outputs::new(dir),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let validation = e.downcast_ref::<Invalid>().is_some()
                || matches!(e.downcast_ref::<Error>(), Some(Error::InvalidArgument(_)));
            ExitCode::from(if validation { 2 } else { 1 })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(threads) = env_override::<usize>("PF_THREADS")? {
        if threads == 0 {
            return Err(Invalid("PF_THREADS must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Design(a) => design(a),
        Command::SweepMse(c) => sweep_mse(prepare(&c)?),
        Command::Tradeoff(c) => tradeoff(prepare(&c)?),
        Command::Mimo(c) => mimo(prepare(&c)?),
        Command::Table2(c) => table2(prepare(&c)?),
        Command::Complexity(c) => complexity(prepare(&c)?),
    }
}

fn design(args: DesignArgs) -> Result<()> {
    let Run { scn, mut out } = prepare(&args.common)?;
    let mask = args.mask.map(|m| match m {
        MaskArg::Afv => Mask::Afv,
        MaskArg::Efv => Mask::Efv,
    });
    let mode = args.mode.map(|m| match m {
        ModeArg::MinNef => Mode::MinNef,
        ModeArg::MinOob => Mode::MinOob,
    });
    let pinch = args.pinch.map(|s| matches!(s, Switch::On));
    let r = studies::design(&scn, mode, mask, pinch)?;
    write_json(&out.path("design.json"), &r)?;
    let s = &r.solution;
    println!(
        "xi={:.6} fractional_oob_db={:.2} total_power={:.4} converged={} kkt_residual={:.2e}{}",
        s.nef,
        r.fractional_oob_db,
        s.total_power,
        s.converged,
        s.kkt_residual,
        if s.oob_inactive { " oob_inactive" } else { "" }
    );
    Ok(())
}

fn sweep_mse(Run { scn, mut out }: Run) -> Result<()> {
    let r = studies::sweep_mse(&scn)?;
    let header = [
        "snr_db",
        "mse_afv",
        "mse_efv",
        "mse_unconstrained",
        "analytic_afv",
        "analytic_efv",
        "analytic_unconstrained",
        "gap_efv_afv_db",
    ];
    let rows = r.rows.iter().map(|x| {
        [
            x.snr_db,
            x.mse_afv,
            x.mse_efv,
            x.mse_unconstrained,
            x.analytic_afv,
            x.analytic_efv,
            x.analytic_unconstrained,
            x.gap_efv_afv_db,
        ]
        .map(|v| v.to_string())
    });
    write_csv(&out.path("sweep_mse.csv"), &header, rows)?;
    write_json(&out.path("sweep_mse.json"), &r)?;
    for (est, report) in ["afv", "efv", "unconstrained"].iter().zip(&r.reports) {
        write_csv(
            &out.path(&format!("mse_{est}.csv")),
            &preamble_forge::EstimationReport::CSV_HEADER,
            report.csv_rows(),
        )?;
    }
    if scn.outputs.gnuplot {
        let gp = gnuplot_script(
            "sweep_mse.csv",
            "ZF MSE versus SNR",
            "SNR (dB)",
            "MSE",
            true,
            &[(2, "AFV"), (3, "EFV"), (4, "unconstrained")],
        );
        write_atomic(&out.path("sweep_mse.gp"), gp.as_bytes())?;
    }
    let gaps: Vec<String> = r.rows.iter().map(|x| format!("{:.2}", x.gap_efv_afv_db)).collect();
    println!(
        "rows={} analytic_gap_db={:.2} empirical_gap_db=[{}]",
        r.rows.len(),
        r.analytic_gap_db,
        gaps.join(", ")
    );
    Ok(())
}

fn tradeoff(Run { scn, mut out }: Run) -> Result<()> {
    let rows = studies::tradeoff(&scn)?;
    let header = [
        "snr_db",
        "mse_cap",
        "xi_0",
        "status",
        "fractional_oob_db",
        "total_power",
    ];
    let csv_rows = rows.iter().map(|x| {
        [
            x.snr_db.to_string(),
            x.mse_cap.to_string(),
            x.xi_0.to_string(),
            x.status.to_string(),
            opt(x.fractional_oob_db),
            opt(x.total_power),
        ]
    });
    write_csv(&out.path("tradeoff.csv"), &header, csv_rows)?;
    write_json(&out.path("tradeoff.json"), &rows)?;
    if scn.outputs.gnuplot {
        let mut gp = String::from(
            "set datafile separator ','\nset title 'Fractional OOB versus MSE cap'\n\
             set xlabel 'MSE cap'\nset ylabel 'fractional OOB (dB)'\nset logscale x\nset grid\n",
        );
        let series: Vec<String> = scn
            .tradeoff
            .snr_db
            .iter()
            .map(|s| {
                format!(
                    "'tradeoff.csv' every ::1 using 2:($1=={s} ? $5 : 1/0) with linespoints title '{s} dB'"
                )
            })
            .collect();
        gp.push_str(&format!("plot {}\n", series.join(", \\\n     ")));
        write_atomic(&out.path("tradeoff.gp"), gp.as_bytes())?;
    }
    let infeasible = rows.iter().filter(|r| r.status != "ok").count();
    println!("rows={} flagged={}", rows.len(), infeasible);
    Ok(())
}

fn mimo(Run { scn, mut out }: Run) -> Result<()> {
    let r = studies::mimo(&scn)?;
    write_json(&out.path("mimo.json"), &r)?;
    let header = [
        "snr_db",
        "sigma2",
        "crlb_1",
        "crlb_2",
        "mse_1",
        "mse_2",
        "mse_1_p2_scaled",
    ];
    let rows = r.crlb.iter().map(|x| {
        [
            x.snr_db, x.sigma2, x.crlb_1, x.crlb_2, x.mse_1, x.mse_2, x.mse_1_p2_scaled,
        ]
        .map(|v| v.to_string())
    });
    write_csv(&out.path("mimo_crlb.csv"), &header, rows)?;
    println!(
        "fractional_oob_db=[{:.2}, {:.2}] siso_fractional_oob_db={:.2} mirror_mismatch={:.2e}",
        r.fractional_oob_db[0], r.fractional_oob_db[1], r.siso_fractional_oob_db, r.mirror_mismatch
    );
    Ok(())
}

fn table2(Run { scn, mut out }: Run) -> Result<()> {
    let t = studies::table2(&scn)?;
    let header = [
        "mask",
        "pinching",
        "fractional_oob_db",
        "equipowered_fractional_oob_db",
        "nef",
        "total_power",
    ];
    let rows = t.entries.iter().map(|e| {
        [
            format!("{:?}", e.mask).to_uppercase(),
            e.pinching.to_string(),
            e.fractional_oob_db.to_string(),
            e.equipowered_fractional_oob_db.to_string(),
            e.nef.to_string(),
            e.total_power.to_string(),
        ]
    });
    write_csv(&out.path("table2.csv"), &header, rows)?;
    write_json(&out.path("table2.json"), &t)?;
    println!("                   AFV        EFV");
    for pinching in [false, true] {
        println!(
            "{:<16} {:>8.2} dB {:>8.2} dB",
            if pinching { "with pinching" } else { "without pinching" },
            t.get(Mask::Afv, pinching).fractional_oob_db,
            t.get(Mask::Efv, pinching).fractional_oob_db
        );
    }
    Ok(())
}

fn complexity(Run { scn, mut out }: Run) -> Result<()> {
    let rows = studies::complexity(&scn)?;
    let header = [
        "mask",
        "n",
        "free_variables",
        "newton_iterations",
        "outer_iterations",
        "seconds",
    ];
    let csv_rows = rows.iter().map(|r| {
        [
            format!("{:?}", r.mask).to_uppercase(),
            r.n.to_string(),
            r.free_variables.to_string(),
            r.newton_iterations.to_string(),
            r.outer_iterations.to_string(),
            r.seconds.to_string(),
        ]
    });
    write_csv(&out.path("complexity.csv"), &header, csv_rows)?;
    for r in &rows {
        println!(
            "{:?} n={} free={} newton={} time={:.3}s",
            r.mask, r.n, r.free_variables, r.newton_iterations, r.seconds
        );
    }
    Ok(())
}
