//! Scenario files: one JSON document describing the frame, the design
//! problem, the channel and every sweep the commands run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use preamble_forge::design::split_comb;
use preamble_forge::{
    db_to_lin, ChannelModel, DesignProblem, Error, FrameConfig, Mask, Mode, Result,
};

fn default_guard() -> usize {
    preamble_forge::spectral::DEFAULT_OOB_GUARD
}

/// Frame description; the OOB region follows from `oob_guard` unless
/// listed explicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameSpec {
    pub n: usize,
    pub n_cp: usize,
    pub l_w: usize,
    pub l_os: usize,
    #[serde(default)]
    pub pinching_enabled: bool,
    pub k_set: Vec<usize>,
    #[serde(default = "default_guard")]
    pub oob_guard: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oob_indices: Option<Vec<usize>>,
}

impl FrameSpec {
    pub fn build(&self) -> Result<FrameConfig> {
        let cfg = FrameConfig::new(
            self.n,
            self.n_cp,
            self.l_w,
            self.l_os,
            self.pinching_enabled,
            self.k_set.clone(),
        )?;
        match &self.oob_indices {
            Some(idx) => cfg.with_oob_indices(idx.clone()),
            None => Ok(cfg.with_oob_guard(self.oob_guard)),
        }
    }

    /// Same frame with pinching set; the OOB region is recomputed for the
    /// new spectrum length.
    pub fn with_pinching(&self, enabled: bool) -> Result<FrameConfig> {
        if self.oob_indices.is_some() && enabled != self.pinching_enabled {
            return Err(Error::InvalidArgument(
                "explicit oob_indices cannot be carried across a pinching toggle".into(),
            ));
        }
        let mut spec = self.clone();
        spec.pinching_enabled = enabled;
        spec.build()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GfdmSpec {
    /// Subcarriers `K`.
    pub subcarriers: usize,
    /// Subsymbols `M`; also the juxtaposition spacing.
    pub subsymbols: usize,
}

/// Design problem parameters. The NEF cap of min-oob is given either
/// directly (`xi_0`) or as an MSE cap at a reference SNR, converted with
/// `σ² = t_p / (n · SNR)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub mode: Mode,
    pub mask: Mask,
    pub t_p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi_0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mse_cap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mse_cap_snr_db: Option<f64>,
}

/// `σ²` at `snr_db` for a preamble of power `t_p` over `n` bins.
pub fn reference_noise(t_p: f64, n: usize, snr_db: f64) -> f64 {
    t_p / (n as f64 * db_to_lin(snr_db))
}

impl ProblemSpec {
    /// NEF cap implied by an MSE cap at `snr_db` on an `n`-bin frame.
    pub fn nef_cap_for(&self, mse_cap: f64, snr_db: f64, n: usize) -> f64 {
        mse_cap / reference_noise(self.t_p, n, snr_db)
    }

    fn nef_cap(&self, n: usize) -> Result<Option<f64>> {
        match (self.xi_0, self.mse_cap, self.mse_cap_snr_db) {
            (Some(x), None, None) => Ok(Some(x)),
            (None, Some(cap), Some(snr)) => Ok(Some(self.nef_cap_for(cap, snr, n))),
            (None, None, None) => Ok(None),
            _ => Err(Error::InvalidArgument(
                "give either xi_0 or both mse_cap and mse_cap_snr_db".into(),
            )),
        }
    }

    /// Concrete problem on `cfg` with the given mode and mask.
    pub fn build(&self, cfg: FrameConfig, mode: Mode, mask: Mask) -> Result<DesignProblem<f64>> {
        let xi_0 = self.nef_cap(cfg.n)?;
        let problem = DesignProblem {
            mode,
            t_p: self.t_p,
            epsilon: self.epsilon,
            xi_0,
            mask,
            cfg,
        };
        problem.validate()?;
        Ok(problem)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    /// Generated taps (`t = 0..taps`).
    pub taps: usize,
    pub decay: f64,
    /// Taps assumed by the LS/MMSE estimators.
    pub l_c: usize,
}

impl ChannelSpec {
    pub fn model(&self) -> ChannelModel {
        ChannelModel::Envelope {
            taps: self.taps,
            decay: self.decay,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TradeoffSpec {
    pub mask: Mask,
    /// SNRs at which MSE caps are converted to NEF caps.
    pub snr_db: Vec<f64>,
    pub mse_caps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MimoSpec {
    /// Frame of the length-K comb preambles; its `k_set` is `k1 ∪ k2`.
    pub frame: FrameSpec,
    /// Both empty: even/odd positions of the frame's `k_set`.
    #[serde(default)]
    pub k1: Vec<usize>,
    #[serde(default)]
    pub k2: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexitySpec {
    pub n_values: Vec<usize>,
    pub block: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub directory: PathBuf,
    #[serde(default)]
    pub gnuplot: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub frame: FrameSpec,
    pub gfdm: GfdmSpec,
    pub problem: ProblemSpec,
    pub channel: ChannelSpec,
    pub sweep: SweepSpec,
    pub tradeoff: TradeoffSpec,
    pub mimo: MimoSpec,
    pub complexity: ComplexitySpec,
    pub outputs: OutputSpec,
}

fn bad<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let scn: ScenarioFile = serde_json::from_str(text)
            .map_err(|e| Error::InvalidArgument(format!("scenario: {e}")))?;
        scn.validate()?;
        Ok(scn)
    }

    /// Reads and validates a scenario file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn frame_config(&self) -> Result<FrameConfig> {
        self.frame.build()
    }

    /// The scenario's own problem on its frame.
    pub fn design_problem(&self) -> Result<DesignProblem<f64>> {
        self.problem
            .build(self.frame_config()?, self.problem.mode, self.problem.mask)
    }

    /// Checks every section before any command runs.
    pub fn validate(&self) -> Result<()> {
        let cfg = self.frame_config()?;
        self.design_problem()?;
        let g = self.gfdm;
        if g.subcarriers == 0 || g.subsymbols == 0 {
            return bad("gfdm dimensions must be positive");
        }
        if g.subcarriers * g.subsymbols != cfg.n {
            return bad(format!(
                "gfdm {}×{} does not match n = {}",
                g.subcarriers, g.subsymbols, cfg.n
            ));
        }
        if self.channel.taps == 0 || self.channel.taps > cfg.n {
            return bad("channel taps must lie in 1..=n");
        }
        if !(self.channel.decay >= 0.0) || !self.channel.decay.is_finite() {
            return bad("channel decay must be finite and non-negative");
        }
        if self.channel.l_c == 0 {
            return bad("channel l_c must be positive");
        }
        if self.sweep.snr_db.is_empty() || self.sweep.snr_db.iter().any(|s| !s.is_finite()) {
            return bad("sweep.snr_db must be a non-empty list of finite values");
        }
        if self.sweep.trials == 0 {
            return bad("sweep.trials must be at least 1");
        }
        if self.tradeoff.snr_db.is_empty() || self.tradeoff.mse_caps.is_empty() {
            return bad("tradeoff grids must not be empty");
        }
        if self.tradeoff.mse_caps.iter().any(|c| !(*c > 0.0)) {
            return bad("tradeoff.mse_caps must be positive");
        }
        let mcfg = self.mimo.frame.build()?;
        let (k1, k2) = self.combs();
        let mut union = k1.clone();
        union.extend(&k2);
        union.sort_unstable();
        let mut frame_k = mcfg.k_set.clone();
        frame_k.sort_unstable();
        if union != frame_k {
            return bad("mimo k1 ∪ k2 must equal the mimo frame's k_set");
        }
        if k1.iter().any(|k| k2.contains(k)) {
            return bad("mimo combs overlap");
        }
        if self.mimo.frame.n < self.channel.taps {
            return bad("mimo frame shorter than the channel");
        }
        if self.complexity.block == 0
            || self.complexity.n_values.iter().any(|&n| n < self.complexity.block)
        {
            return bad("complexity block must be positive and fit every n");
        }
        Ok(())
    }

    /// `k1`/`k2` as listed, or the even/odd split of the mimo `k_set`.
    pub fn combs(&self) -> (Vec<usize>, Vec<usize>) {
        if self.mimo.k1.is_empty() && self.mimo.k2.is_empty() {
            split_comb(&self.mimo.frame.k_set)
        } else {
            (self.mimo.k1.clone(), self.mimo.k2.clone())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE1: &str = include_str!("../../../scenarios/table1.json");

    #[test]
    fn shipped_scenario_is_valid() {
        let s = ScenarioFile::from_json(TABLE1).unwrap();
        let cfg = s.frame_config().unwrap();
        assert_eq!(cfg.n, 160);
        assert_eq!(cfg.k_set, vec![76, 77, 78, 79, 80]);
        let p = s.design_problem().unwrap();
        // 0.01 at 24 dB on 160 bins with T_P = 100
        let xi = p.xi_0.unwrap();
        assert!((xi - 0.01 * 160.0 * 10f64.powf(2.4) / 100.0).abs() < 1e-12);
        let (k1, k2) = s.combs();
        assert_eq!(k1, (9..=23).step_by(2).collect::<Vec<_>>());
        assert_eq!(k2, (10..=24).step_by(2).collect::<Vec<_>>());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = TABLE1.replacen("\"frame\"", "\"bogus\": 1, \"frame\"", 1);
        assert!(ScenarioFile::from_json(&text).is_err());
    }

    #[test]
    fn empty_k_set_is_a_validation_error() {
        let mut v: serde_json::Value = serde_json::from_str(TABLE1).unwrap();
        v["frame"]["k_set"] = serde_json::json!([]);
        let err = ScenarioFile::from_json(&v.to_string()).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn conflicting_caps_are_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(TABLE1).unwrap();
        v["problem"]["xi_0"] = serde_json::json!(4.0);
        assert!(ScenarioFile::from_json(&v.to_string()).is_err());
    }
}
