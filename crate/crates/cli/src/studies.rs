//! The computations behind each command, returning plain data.

use rayon::prelude::*;
use serde::Serialize;

use preamble_forge::channel::{mimo_monte_carlo, monte_carlo, MimoReport};
use preamble_forge::design::{
    comb_design, complexity_probe, equipowered, juxtapose, nef, ComplexityRow,
};
use preamble_forge::{
    lin_to_db, DesignContext, DesignProblem, DesignSolution, Error, EstimationReport, Estimator,
    Mask, Mode, MonteCarlo, Result, SpectrumOperator,
};

use crate::scenario::{reference_noise, ScenarioFile};

fn db(x: f64) -> f64 {
    lin_to_db(x)
}

#[derive(Debug, Clone, Serialize)]
pub struct DesignReport {
    pub mode: Mode,
    pub mask: Mask,
    pub pinching: bool,
    pub fractional_oob_db: f64,
    /// Same frame and power, equal amplitudes on `k_set`.
    pub equipowered_fractional_oob_db: f64,
    pub solution: DesignSolution<f64>,
}

/// Single solve of the scenario problem with optional overrides.
pub fn design(
    scn: &ScenarioFile,
    mode: Option<Mode>,
    mask: Option<Mask>,
    pinching: Option<bool>,
) -> Result<DesignReport> {
    let pinching = pinching.unwrap_or(scn.frame.pinching_enabled);
    let cfg = scn.frame.with_pinching(pinching)?;
    let mode = mode.unwrap_or(scn.problem.mode);
    let mask = mask.unwrap_or(scn.problem.mask);
    let problem = scn.problem.build(cfg, mode, mask)?;
    let ctx = DesignContext::new(&problem.cfg)?;
    let solution = ctx.solve(&problem)?;
    let eq = equipowered(problem.cfg.n, &problem.cfg.k_set, problem.t_p);
    Ok(DesignReport {
        mode,
        mask,
        pinching,
        fractional_oob_db: db(solution.fractional_oob),
        equipowered_fractional_oob_db: db(ctx.operator.fractional_oob_real(&eq)?),
        solution,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Table2Entry {
    pub mask: Mask,
    pub pinching: bool,
    pub fractional_oob_db: f64,
    pub equipowered_fractional_oob_db: f64,
    pub nef: f64,
    pub total_power: f64,
    pub kkt_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Table2 {
    pub mode: Mode,
    pub entries: Vec<Table2Entry>,
}

impl Table2 {
    pub fn get(&self, mask: Mask, pinching: bool) -> &Table2Entry {
        self.entries
            .iter()
            .find(|e| e.mask == mask && e.pinching == pinching)
            .expect("all four cells are present")
    }
}

/// Fractional OOB of AFV/EFV designs with and without pinching.
pub fn table2(scn: &ScenarioFile) -> Result<Table2> {
    let cells = [
        (Mask::Afv, false),
        (Mask::Afv, true),
        (Mask::Efv, false),
        (Mask::Efv, true),
    ];
    let entries = cells
        .par_iter()
        .map(|&(mask, pinching)| {
            let r = design(scn, None, Some(mask), Some(pinching))?;
            Ok(Table2Entry {
                mask,
                pinching,
                fractional_oob_db: r.fractional_oob_db,
                equipowered_fractional_oob_db: r.equipowered_fractional_oob_db,
                nef: r.solution.nef,
                total_power: r.solution.total_power,
                kkt_residual: r.solution.kkt_residual,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Table2 {
        mode: scn.problem.mode,
        entries,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MseRow {
    pub snr_db: f64,
    pub mse_afv: f64,
    pub mse_efv: f64,
    pub mse_unconstrained: f64,
    pub analytic_afv: f64,
    pub analytic_efv: f64,
    pub analytic_unconstrained: f64,
    /// `10·log10(mse_afv / mse_efv)`: extra SNR AFV needs for the same MSE.
    pub gap_efv_afv_db: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MseSweep {
    pub rows: Vec<MseRow>,
    /// Gap predicted by `ξ·‖P‖²` of the two juxtaposed preambles.
    pub analytic_gap_db: f64,
    pub preamble_afv: Vec<f64>,
    pub preamble_efv: Vec<f64>,
    pub reports: Vec<EstimationReport>,
}

/// Full-band ZF MSE of juxtaposed AFV and EFV designs and of the flat
/// full-band preamble.
pub fn sweep_mse(scn: &ScenarioFile) -> Result<MseSweep> {
    let cfg = scn.frame_config()?;
    let n = cfg.n;
    let m = scn.gfdm.subsymbols;
    let ctx = DesignContext::new(&cfg)?;
    let mut full = Vec::new();
    for mask in [Mask::Afv, Mask::Efv] {
        let problem = scn.problem.build(cfg.clone(), scn.problem.mode, mask)?;
        let sol = ctx.solve(&problem)?;
        full.push(juxtapose(&sol.preamble, m, n)?);
    }
    full.push(equipowered(n, &(0..n).collect::<Vec<_>>(), scn.problem.t_p));

    let all: Vec<usize> = (0..n).collect();
    let effort = |p: &[f64]| -> Result<f64> {
        Ok(nef(p, &all)? * p.iter().map(|v| v * v).sum::<f64>())
    };
    let analytic_gap_db = db(effort(&full[0])? / effort(&full[1])?);

    let mut reports = Vec::new();
    for p in &full {
        let mc = MonteCarlo {
            snr_db: scn.sweep.snr_db.clone(),
            trials: scn.sweep.trials,
            estimator: Estimator::Zf,
            k_set: all.clone(),
            l_c: scn.channel.l_c,
            channel: scn.channel.model(),
            seed: scn.sweep.seed,
        };
        reports.push(monte_carlo(p, &mc)?);
    }
    let rows = scn
        .sweep
        .snr_db
        .iter()
        .enumerate()
        .map(|(i, &snr)| MseRow {
            snr_db: snr,
            mse_afv: reports[0].empirical_mse[i],
            mse_efv: reports[1].empirical_mse[i],
            mse_unconstrained: reports[2].empirical_mse[i],
            analytic_afv: reports[0].analytic_mse[i],
            analytic_efv: reports[1].analytic_mse[i],
            analytic_unconstrained: reports[2].analytic_mse[i],
            gap_efv_afv_db: db(reports[0].empirical_mse[i] / reports[1].empirical_mse[i]),
        })
        .collect();
    let mut full = full.into_iter();
    Ok(MseSweep {
        rows,
        analytic_gap_db,
        preamble_afv: full.next().expect("afv"),
        preamble_efv: full.next().expect("efv"),
        reports,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TradeoffRow {
    pub snr_db: f64,
    pub mse_cap: f64,
    /// NEF cap handed to the min-oob solve.
    pub xi_0: f64,
    /// `ok`, `infeasible` or `not-converged`.
    pub status: &'static str,
    pub fractional_oob_db: Option<f64>,
    pub total_power: Option<f64>,
}

/// Min-oob fractional OOB across MSE caps, one series per SNR.
pub fn tradeoff(scn: &ScenarioFile) -> Result<Vec<TradeoffRow>> {
    let cfg = scn.frame_config()?;
    let ctx = DesignContext::new(&cfg)?;
    let grid: Vec<(f64, f64)> = scn
        .tradeoff
        .snr_db
        .iter()
        .flat_map(|&s| scn.tradeoff.mse_caps.iter().map(move |&c| (s, c)))
        .collect();
    grid.par_iter()
        .map(|&(snr_db, mse_cap)| {
            let xi_0 = scn.problem.nef_cap_for(mse_cap, snr_db, cfg.n);
            let problem = DesignProblem {
                mode: Mode::MinOob,
                t_p: scn.problem.t_p,
                epsilon: None,
                xi_0: Some(xi_0),
                mask: scn.tradeoff.mask,
                cfg: cfg.clone(),
            };
            let mut row = TradeoffRow {
                snr_db,
                mse_cap,
                xi_0,
                status: "ok",
                fractional_oob_db: None,
                total_power: None,
            };
            match ctx.solve(&problem) {
                Ok(sol) => {
                    row.fractional_oob_db = Some(db(sol.fractional_oob));
                    row.total_power = Some(sol.total_power);
                }
                Err(Error::Infeasible { .. }) => row.status = "infeasible",
                Err(Error::NotConverged { .. }) => row.status = "not-converged",
                Err(e) => return Err(e),
            }
            Ok(row)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct CrlbRow {
    pub snr_db: f64,
    pub sigma2: f64,
    pub crlb_1: f64,
    pub crlb_2: f64,
    pub mse_1: f64,
    pub mse_2: f64,
    /// Antenna-1 MSE of a paired run with antenna 2 at 10× amplitude.
    pub mse_1_p2_scaled: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MimoStudy {
    pub k1: Vec<usize>,
    pub k2: Vec<usize>,
    pub preamble_1: Vec<f64>,
    pub preamble_2: Vec<f64>,
    pub fractional_oob_db: [f64; 2],
    /// Scenario design on the single-antenna frame, for comparison.
    pub siso_fractional_oob_db: f64,
    /// `max_k |P₁[k] − P₂[k₁ + k₂_max − k]|` relative to `max |P₁|`.
    pub mirror_mismatch: f64,
    pub crlb: Vec<CrlbRow>,
    pub report: MimoReport,
}

/// Comb preambles for two antennas and their per-channel bounds.
pub fn mimo(scn: &ScenarioFile) -> Result<MimoStudy> {
    let cfg = scn.mimo.frame.build()?;
    let (k1, k2) = scn.combs();
    let template = scn.problem.build(cfg.clone(), scn.problem.mode, Mask::Efv)?;
    let (s1, s2) = comb_design(&template, &k1, &k2)?;
    let p1 = s1.preamble.clone();
    let p2 = s2.preamble.clone();

    let reflect = k1.iter().chain(&k2).min().unwrap() + k1.iter().chain(&k2).max().unwrap();
    let peak = p1.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mirror_mismatch = k1
        .iter()
        .map(|&k| (p1[k] - p2[reflect - k]).abs())
        .fold(0.0f64, f64::max)
        / peak;

    let siso = design(scn, None, Some(Mask::Efv), None)?;
    let sigma2: Vec<f64> = scn
        .sweep
        .snr_db
        .iter()
        .map(|&s| reference_noise(scn.problem.t_p, cfg.n, s))
        .collect();
    let report = mimo_monte_carlo(
        [&p1, &p2],
        [&k1, &k2],
        scn.channel.model(),
        &sigma2,
        scn.sweep.trials,
        scn.sweep.seed,
    )?;
    let p2_scaled: Vec<f64> = p2.iter().map(|v| 10.0 * v).collect();
    let scaled = mimo_monte_carlo(
        [&p1, &p2_scaled],
        [&k1, &k2],
        scn.channel.model(),
        &sigma2,
        scn.sweep.trials,
        scn.sweep.seed,
    )?;
    let crlb = scn
        .sweep
        .snr_db
        .iter()
        .enumerate()
        .map(|(i, &snr)| CrlbRow {
            snr_db: snr,
            sigma2: sigma2[i],
            crlb_1: report.crlb[0][i],
            crlb_2: report.crlb[1][i],
            mse_1: report.empirical_mse[0][i],
            mse_2: report.empirical_mse[1][i],
            mse_1_p2_scaled: scaled.empirical_mse[0][i],
        })
        .collect();
    let op = SpectrumOperator::<f64>::new(&cfg)?;
    Ok(MimoStudy {
        fractional_oob_db: [
            db(op.fractional_oob_real(&p1)?),
            db(op.fractional_oob_real(&p2)?),
        ],
        siso_fractional_oob_db: siso.fractional_oob_db,
        mirror_mismatch,
        k1,
        k2,
        preamble_1: p1,
        preamble_2: p2,
        crlb,
        report,
    })
}

/// Solve statistics for both masks.
pub fn complexity(scn: &ScenarioFile) -> Result<Vec<ComplexityRow>> {
    let template = scn.design_problem()?;
    let mut rows = complexity_probe(
        Mask::Efv,
        &scn.complexity.n_values,
        scn.complexity.block,
        &template,
    )?;
    rows.extend(complexity_probe(
        Mask::Afv,
        &scn.complexity.n_values,
        scn.complexity.block,
        &template,
    )?);
    Ok(rows)
}
