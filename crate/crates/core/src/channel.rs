//! Multipath channel draws, SISO/2×1 preamble transmission and Monte-Carlo
//! MSE sweeps.
//!
//! Taps are Rayleigh: `h_t = a_t · z_t` with `z_t ~ CN(0, 1)` and envelope
//! `a_t ∝ e^{−decay·t}` normalised so `Σ a_t² = 1` (so `E‖h‖² = 1`). The
//! frequency response is `√n · W_n · [h; 0]`, which turns circular
//! convolution into a per-bin product under the unitary DFT.
//!
//! Randomness is seeded per call; Monte-Carlo trials draw from
//! `ChaCha8Rng` streams keyed by `(seed, trial, snr_index)`.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::nef;
use crate::error::{invalid, Result};
use crate::estimation::{
    crlb_mimo, interpolate_full, ls_analytic_mse, ls_time_estimate, mmse_analytic_mse, mmse_estimate,
    tone_crlb, zf_estimate, EstimationReport, Estimator, ToneGrid,
};
use crate::scalar::{db_to_lin, twiddle, Cplx, Real, Sample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization<T> {
    pub taps: Vec<Cplx<T>>,
    /// Diagonal of the frequency-domain channel matrix, length `n`.
    pub freq_response: Vec<Cplx<T>>,
    pub seed: u64,
}

impl<T: Real> ChannelRealization<T> {
    /// Wraps explicit taps, computing the `n`-bin response.
    pub fn from_taps(taps: Vec<Cplx<T>>, n: usize, seed: u64) -> Result<Self> {
        if taps.is_empty() || taps.len() > n {
            return invalid(format!("{} taps do not fit {n} bins", taps.len()));
        }
        let root = T::from_usize_lossy(n).sqrt();
        let freq_response = interpolate_full(&taps, n)?
            .into_iter()
            .map(|v| v * root)
            .collect();
        Ok(ChannelRealization {
            taps,
            freq_response,
            seed,
        })
    }

    pub fn n(&self) -> usize {
        self.freq_response.len()
    }
}

/// `e^{−decay·t}` for `t = 0..l_c`, unnormalised.
pub fn tap_envelope(l_c: usize, decay: f64) -> Vec<f64> {
    (0..l_c).map(|t| (-decay * t as f64).exp()).collect()
}

fn complex_normal<T: Real, R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Cplx<T> {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex::new(T::lit(re * s), T::lit(im * s))
}

fn taps_from_rng<T: Real, R: Rng + ?Sized>(l_c: usize, decay: f64, rng: &mut R) -> Vec<Cplx<T>> {
    let env = tap_envelope(l_c, decay);
    let norm = env.iter().map(|a| a * a).sum::<f64>().sqrt();
    env.iter()
        .map(|a| complex_normal::<T, _>(rng, 1.0) * T::lit(a / norm))
        .collect()
}

/// Rayleigh channel with `l_c` taps under the exponential envelope.
pub fn gen_channel<T: Real>(l_c: usize, decay: f64, n: usize, seed: u64) -> Result<ChannelRealization<T>> {
    if l_c == 0 {
        return invalid("channel needs at least one tap");
    }
    if !(decay >= 0.0) || !decay.is_finite() {
        return invalid("tap decay must be finite and non-negative");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ChannelRealization::from_taps(taps_from_rng(l_c, decay, &mut rng), n, seed)
}

/// Channel whose taps in the unitary tone basis, `√n·h`, are i.i.d.
/// `CN(0, 1)`: the prior assumed by the MMSE estimator.
pub fn gen_identity_prior_channel<T: Real>(
    l_c: usize,
    n: usize,
    seed: u64,
) -> Result<ChannelRealization<T>> {
    if l_c == 0 {
        return invalid("channel needs at least one tap");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inv_root = T::one() / T::from_usize_lossy(n).sqrt();
    let taps = (0..l_c)
        .map(|_| complex_normal::<T, _>(&mut rng, 1.0) * inv_root)
        .collect();
    ChannelRealization::from_taps(taps, n, seed)
}

fn check_lengths<T: Real, S>(p: &[S], ch: &ChannelRealization<T>, sigma2: T) -> Result<()> {
    if p.len() != ch.n() {
        return invalid(format!(
            "preamble has {} bins, channel {}",
            p.len(),
            ch.n()
        ));
    }
    if !(sigma2 >= T::zero()) {
        return invalid("noise variance must be non-negative");
    }
    Ok(())
}

fn transmit_with<T: Real, S: Sample<T>, R: Rng + ?Sized>(
    p: &[S],
    ch: &ChannelRealization<T>,
    sigma2: T,
    rng: &mut R,
) -> Vec<Cplx<T>> {
    let var = sigma2.as_f64();
    p.iter()
        .zip(&ch.freq_response)
        .map(|(pk, hk)| *hk * pk.to_complex() + complex_normal::<T, _>(rng, var))
        .collect()
}

/// `Y_k = H_k·P_k + N_k` with `N_k ~ CN(0, σ²)` drawn in frequency.
pub fn transmit<T: Real, S: Sample<T>>(
    p: &[S],
    ch: &ChannelRealization<T>,
    sigma2: T,
    seed: u64,
) -> Result<Vec<Cplx<T>>> {
    check_lengths(p, ch, sigma2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(transmit_with(p, ch, sigma2, &mut rng))
}

/// Output of the explicit time-domain link.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeDomainReception<T> {
    pub y: Vec<Cplx<T>>,
    /// `n_cp ≥ l_c − 1`: the prefix absorbs all inter-symbol interference
    /// and the result matches the frequency-domain model.
    pub isi_free: bool,
}

/// Time-domain link: IDFT, cyclic prefix, linear convolution with the
/// taps, time-domain noise `CN(0, σ²)`, prefix removal and DFT.
///
/// The symbol is preceded by silence, so a short prefix leaves an
/// incomplete convolution tail in the first samples.
pub fn transmit_time_domain<T: Real, S: Sample<T>>(
    p: &[S],
    ch: &ChannelRealization<T>,
    sigma2: T,
    n_cp: usize,
    seed: u64,
) -> Result<TimeDomainReception<T>> {
    check_lengths(p, ch, sigma2)?;
    let n = p.len();
    if n_cp > n {
        return invalid(format!("cyclic prefix {n_cp} longer than symbol {n}"));
    }
    let scale = T::one() / T::from_usize_lossy(n).sqrt();
    let x: Vec<Cplx<T>> = (0..n)
        .map(|t| {
            p.iter().enumerate().fold(Complex::new(T::zero(), T::zero()), |acc, (k, pk)| {
                acc + pk.to_complex() * twiddle::<T>(k * t, n).conj()
            }) * scale
        })
        .collect();
    let tx: Vec<Cplx<T>> = x[n - n_cp..].iter().chain(&x).copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let var = sigma2.as_f64();
    let rx: Vec<Cplx<T>> = (n_cp..n_cp + n)
        .map(|i| {
            let mut acc = Complex::new(T::zero(), T::zero());
            for (t, h) in ch.taps.iter().enumerate() {
                if t <= i {
                    acc += *h * tx[i - t];
                }
            }
            acc + complex_normal::<T, _>(&mut rng, var)
        })
        .collect();
    let y = (0..n)
        .map(|k| {
            rx.iter().enumerate().fold(Complex::new(T::zero(), T::zero()), |acc, (t, v)| {
                acc + *v * twiddle::<T>(k * t, n)
            }) * scale
        })
        .collect();
    Ok(TimeDomainReception {
        y,
        isi_free: n_cp + 1 >= ch.taps.len(),
    })
}

/// Received frequency vector of the 2×1 link, `H₁P₁ + H₂P₂ + N`.
#[derive(Debug, Clone, PartialEq)]
pub struct MimoObservation<T> {
    pub y: Vec<Cplx<T>>,
}

fn support<T: Real, S: Sample<T>>(p: &[S]) -> impl Iterator<Item = usize> + '_ {
    p.iter()
        .enumerate()
        .filter(|(_, v)| v.power() > T::zero())
        .map(|(k, _)| k)
}

/// Two-antenna transmission; the preambles must occupy disjoint bins.
pub fn mimo_transmit<T: Real, S: Sample<T>>(
    p1: &[S],
    p2: &[S],
    ch1: &ChannelRealization<T>,
    ch2: &ChannelRealization<T>,
    sigma2: T,
    seed: u64,
) -> Result<MimoObservation<T>> {
    check_lengths(p1, ch1, sigma2)?;
    check_lengths(p2, ch2, sigma2)?;
    if let Some(k) = support::<T, S>(p1).find(|&k| p2[k].power() > T::zero()) {
        return invalid(format!("antenna preambles overlap at bin {k}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let var = sigma2.as_f64();
    let y = (0..p1.len())
        .map(|k| {
            ch1.freq_response[k] * p1[k].to_complex()
                + ch2.freq_response[k] * p2[k].to_complex()
                + complex_normal::<T, _>(&mut rng, var)
        })
        .collect();
    Ok(MimoObservation { y })
}

/// SplitMix64 finaliser.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent substream seed for one Monte-Carlo trial.
pub fn trial_seed(master: u64, trial: u64, snr_index: u64) -> u64 {
    mix(mix(mix(master) ^ trial) ^ snr_index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// `σ² = ‖P‖² / (n · SNR)`.
pub fn noise_variance<T: Real, S: Sample<T>>(p: &[S], snr_db: f64) -> f64 {
    let power = p.iter().fold(0.0, |a, v| a + v.power().as_f64());
    power / (p.len() as f64 * db_to_lin(snr_db))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ChannelModel {
    /// Rayleigh taps under `e^{−decay·t}`, `taps` of them.
    Envelope { taps: usize, decay: f64 },
    /// Unit-variance i.i.d. taps in the tone basis (MMSE-matched prior).
    IdentityPrior { taps: usize },
}

impl ChannelModel {
    pub fn draw<T: Real>(&self, n: usize, seed: u64) -> Result<ChannelRealization<T>> {
        match *self {
            ChannelModel::Envelope { taps, decay } => gen_channel(taps, decay, n, seed),
            ChannelModel::IdentityPrior { taps } => gen_identity_prior_channel(taps, n, seed),
        }
    }
}

/// Monte-Carlo configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarlo {
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub estimator: Estimator,
    /// Estimation bins (ZF) or isolated tones (LS/MMSE).
    pub k_set: Vec<usize>,
    /// Taps assumed by LS/MMSE; ignored for ZF.
    pub l_c: usize,
    pub channel: ChannelModel,
    pub seed: u64,
}

/// Runs `trials` independent draws per SNR point. Trials run in parallel;
/// the per-trial errors are summed in trial order, so the report does not
/// depend on the thread count.
pub fn monte_carlo<S: Sample<f64> + Sync>(preamble: &[S], mc: &MonteCarlo) -> Result<EstimationReport> {
    if mc.trials == 0 {
        return invalid("at least one trial is required");
    }
    let n = preamble.len();
    let grid = match mc.estimator {
        Estimator::Zf => None,
        Estimator::Ls | Estimator::Mmse => Some(ToneGrid::<f64>::new(mc.k_set.clone(), mc.l_c, n)?),
    };
    let p_tones: Vec<S> = mc.k_set.iter().map(|&k| preamble[k]).collect();
    let xi = nef(preamble, &mc.k_set)?;

    let mut report = EstimationReport {
        estimator: mc.estimator,
        trials: mc.trials,
        snr_db: mc.snr_db.clone(),
        empirical_mse: Vec::new(),
        std_error: Vec::new(),
        analytic_mse: Vec::new(),
        crlb: Vec::new(),
    };
    for (si, &snr) in mc.snr_db.iter().enumerate() {
        let sigma2 = noise_variance(preamble, snr);
        let errors = (0..mc.trials)
            .into_par_iter()
            .map(|trial| {
                let base = trial_seed(mc.seed, trial as u64, si as u64);
                let ch = mc.channel.draw::<f64>(n, base)?;
                let y = transmit(preamble, &ch, sigma2, mix(base))?;
                let tones = zf_estimate(&y, preamble, &mc.k_set)?;
                let err = match (&grid, mc.estimator) {
                    (None, _) => tones
                        .iter()
                        .zip(&mc.k_set)
                        .map(|(e, &k)| (e - ch.freq_response[k]).norm_sqr())
                        .sum(),
                    (Some(g), est) => {
                        let taps = if est == Estimator::Ls {
                            ls_time_estimate(&tones, g)?
                        } else {
                            mmse_estimate(&tones, &p_tones, sigma2, g)?
                        };
                        let full = interpolate_full(&taps, n)?;
                        full.iter()
                            .zip(&ch.freq_response)
                            .map(|(e, h)| (e - h).norm_sqr())
                            .sum()
                    }
                };
                Ok(err)
            })
            .collect::<Result<Vec<f64>>>()?;
        let count = mc.trials as f64;
        let mean = errors.iter().sum::<f64>() / count;
        let var = if mc.trials > 1 {
            errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (count - 1.0)
        } else {
            0.0
        };
        let (analytic, bound) = match &grid {
            None => (sigma2 * xi, sigma2 * xi),
            Some(g) => {
                let a = if mc.estimator == Estimator::Ls {
                    ls_analytic_mse(&p_tones, sigma2, g)?
                } else {
                    mmse_analytic_mse(&p_tones, sigma2, g)?
                };
                (a, tone_crlb(&p_tones, sigma2, g)?)
            }
        };
        report.empirical_mse.push(mean);
        report.std_error.push((var / count).sqrt());
        report.analytic_mse.push(analytic);
        report.crlb.push(bound);
    }
    Ok(report)
}

/// Per-antenna ZF results of the 2×1 comb simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MimoReport {
    pub trials: usize,
    pub sigma2: Vec<f64>,
    /// `empirical_mse[i][s]`: antenna `i`, noise level `s`, summed over its comb.
    pub empirical_mse: [Vec<f64>; 2],
    pub std_error: [Vec<f64>; 2],
    /// `σ² · Σ_{k∈K_i} 1/|P_{i,k}|²`.
    pub crlb: [Vec<f64>; 2],
}

/// Joint transmission of two comb preambles with per-comb ZF estimation.
///
/// Noise levels are given directly so that rescaling one antenna leaves
/// the other antenna's draws untouched.
pub fn mimo_monte_carlo(
    p: [&[f64]; 2],
    combs: [&[usize]; 2],
    model: ChannelModel,
    sigma2: &[f64],
    trials: usize,
    seed: u64,
) -> Result<MimoReport> {
    if trials == 0 {
        return invalid("at least one trial is required");
    }
    if p[0].len() != p[1].len() {
        return invalid("antenna preambles differ in length");
    }
    let n = p[0].len();
    let mut report = MimoReport {
        trials,
        sigma2: sigma2.to_vec(),
        empirical_mse: [Vec::new(), Vec::new()],
        std_error: [Vec::new(), Vec::new()],
        crlb: [Vec::new(), Vec::new()],
    };
    for (si, &s2) in sigma2.iter().enumerate() {
        let errors = (0..trials)
            .into_par_iter()
            .map(|trial| {
                let base = trial_seed(seed, trial as u64, si as u64);
                let (ch1, ch2) = mimo_channels(model, n, base)?;
                let obs = mimo_transmit(p[0], p[1], &ch1, &ch2, s2, mix(base))?;
                let mut err = [0.0; 2];
                for (i, ch) in [&ch1, &ch2].into_iter().enumerate() {
                    let est = zf_estimate(&obs.y, p[i], combs[i])?;
                    err[i] = est
                        .iter()
                        .zip(combs[i])
                        .map(|(e, &k)| (e - ch.freq_response[k]).norm_sqr())
                        .sum();
                }
                Ok(err)
            })
            .collect::<Result<Vec<[f64; 2]>>>()?;
        let count = trials as f64;
        for i in 0..2 {
            let mean = errors.iter().map(|e| e[i]).sum::<f64>() / count;
            let var = if trials > 1 {
                errors.iter().map(|e| (e[i] - mean).powi(2)).sum::<f64>() / (count - 1.0)
            } else {
                0.0
            };
            report.empirical_mse[i].push(mean);
            report.std_error[i].push((var / count).sqrt());
            report.crlb[i].push(crlb_mimo(p[i], combs[i], s2)?);
        }
    }
    Ok(report)
}

/// Independent channels for the two antennas of one trial.
pub fn mimo_channels(
    model: ChannelModel,
    n: usize,
    base: u64,
) -> Result<(ChannelRealization<f64>, ChannelRealization<f64>)> {
    Ok((model.draw(n, mix(base ^ 1))?, model.draw(n, mix(base ^ 2))?))
}
