//! Channel estimators: per-bin zero forcing, and isolated-tone LS / MMSE fits
//! of a short impulse response followed by DFT interpolation.
//!
//! Tap vectors returned by the tone estimators live in the partial-DFT basis
//! of [`ToneGrid`]: a channel with taps `h` produces tones `F_T·(√n_g·h)`, so
//! the estimate is `√n_g·ĥ` and [`interpolate_full`] maps it straight back to
//! the `n_g`-bin frequency response.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::design::nef;
use crate::error::{invalid, Error, Result};
use crate::scalar::{twiddle, Cplx, Real, Sample};

/// Per-bin zero-forcing estimate `Ĥ_k = Y_k / P_k` over `k_set`.
pub fn zf_estimate<T: Real, S: Sample<T>>(
    y: &[Cplx<T>],
    p: &[S],
    k_set: &[usize],
) -> Result<Vec<Cplx<T>>> {
    if y.len() != p.len() {
        return invalid(format!(
            "received vector has {} bins, preamble {}",
            y.len(),
            p.len()
        ));
    }
    k_set
        .iter()
        .map(|&k| {
            let Some(pk) = p.get(k) else {
                return invalid(format!("estimation bin {k} out of range"));
            };
            if !(pk.power() > T::zero()) {
                return invalid(format!("preamble is zero at estimation bin {k}"));
            }
            Ok(y[k] / pk.to_complex())
        })
        .collect()
}

/// Partial DFT linking `l_c` taps to the isolated tones `k_prime`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToneGrid<T: Real> {
    pub k_prime: Vec<usize>,
    pub l_c: usize,
    pub n_g: usize,
    /// Rows `k_prime`, columns `0..l_c` of the unitary `n_g`-point DFT.
    pub f_t: DMatrix<Cplx<T>>,
}

impl<T: Real> ToneGrid<T> {
    pub fn new(k_prime: Vec<usize>, l_c: usize, n_g: usize) -> Result<Self> {
        if k_prime.is_empty() {
            return invalid("tone set is empty");
        }
        if l_c == 0 || l_c > n_g {
            return invalid(format!("tap count {l_c} must lie in 1..={n_g}"));
        }
        let mut seen = vec![false; n_g];
        for &k in &k_prime {
            if k >= n_g {
                return invalid(format!("tone {k} outside 0..{n_g}"));
            }
            if std::mem::replace(&mut seen[k], true) {
                return invalid(format!("tone {k} listed twice"));
            }
        }
        let scale = T::one() / T::from_usize_lossy(n_g).sqrt();
        let f_t = DMatrix::from_fn(k_prime.len(), l_c, |r, c| {
            twiddle::<T>(k_prime[r] * c, n_g) * scale
        });
        Ok(ToneGrid {
            k_prime,
            l_c,
            n_g,
            f_t,
        })
    }

    /// `|K′| ≥ l_c`, the necessary condition for a unique LS fit.
    pub fn is_overdetermined(&self) -> bool {
        self.k_prime.len() >= self.l_c
    }

    /// Noiseless tones produced by channel taps `h` (`√n_g · F_T · h`).
    pub fn tones_of_taps(&self, h: &[Cplx<T>]) -> Result<Vec<Cplx<T>>> {
        if h.len() > self.l_c {
            return invalid(format!("{} taps exceed the grid's {}", h.len(), self.l_c));
        }
        let mut g = DVector::zeros(self.l_c);
        let root = Complex::from(T::from_usize_lossy(self.n_g).sqrt());
        for (i, &v) in h.iter().enumerate() {
            g[i] = v * root;
        }
        Ok((&self.f_t * g).iter().copied().collect())
    }

    fn check_tones(&self, len: usize) -> Result<()> {
        if len == self.k_prime.len() {
            Ok(())
        } else {
            invalid(format!(
                "expected {} tone values, got {len}",
                self.k_prime.len()
            ))
        }
    }
}

/// Least-squares taps `F_T⁺ · ĥ_tones` via column-pivoted QR.
pub fn ls_time_estimate<T: Real>(h_tones: &[Cplx<T>], grid: &ToneGrid<T>) -> Result<Vec<Cplx<T>>> {
    grid.check_tones(h_tones.len())?;
    if !grid.is_overdetermined() {
        return Err(Error::RankDeficient {
            rank: grid.k_prime.len(),
            required: grid.l_c,
        });
    }
    let qr = grid.f_t.clone().col_piv_qr();
    let r = qr.r();
    let tol = grid.f_t.norm() * T::lit(1e-10);
    let rank = (0..grid.l_c)
        .take_while(|&i| r[(i, i)].norm_sqr() > tol * tol)
        .count();
    if rank < grid.l_c {
        return Err(Error::RankDeficient {
            rank,
            required: grid.l_c,
        });
    }
    let b = DVector::from_column_slice(h_tones);
    let qhb = qr.q().adjoint() * b;
    let mut z = r
        .solve_upper_triangular(&qhb)
        .ok_or_else(|| Error::Singular("triangular factor".into()))?;
    // F_T·Π = Q·R, so the unpivoted solution is Π·z.
    qr.p().inv_permute_rows(&mut z);
    Ok(z.iter().copied().collect())
}

/// Linear MMSE taps under the identity prior `E[g gᴴ] = I`:
/// `F_Tᴴ [F_T F_Tᴴ + diag(σ²/|P_k|²)]⁻¹ H_L`.
pub fn mmse_estimate<T: Real, S: Sample<T>>(
    h_l_tones: &[Cplx<T>],
    p_tones: &[S],
    sigma2: T,
    grid: &ToneGrid<T>,
) -> Result<Vec<Cplx<T>>> {
    grid.check_tones(h_l_tones.len())?;
    let inner = mmse_inner(p_tones, sigma2, grid)?;
    let b = DVector::from_column_slice(h_l_tones);
    let x = solve_hermitian(inner, &b)?;
    Ok((grid.f_t.adjoint() * x).iter().copied().collect())
}

fn mmse_inner<T: Real, S: Sample<T>>(
    p_tones: &[S],
    sigma2: T,
    grid: &ToneGrid<T>,
) -> Result<DMatrix<Cplx<T>>> {
    grid.check_tones(p_tones.len())?;
    if !(sigma2 >= T::zero()) {
        return invalid("noise variance must be non-negative");
    }
    let mut inner = &grid.f_t * grid.f_t.adjoint();
    for (i, p) in p_tones.iter().enumerate() {
        let pw = p.power();
        if !(pw > T::zero()) {
            return invalid(format!("preamble is zero at tone {}", grid.k_prime[i]));
        }
        inner[(i, i)] += Complex::from(sigma2 / pw);
    }
    Ok(inner)
}

fn solve_hermitian<T: Real>(
    a: DMatrix<Cplx<T>>,
    b: &DVector<Cplx<T>>,
) -> Result<DVector<Cplx<T>>> {
    if let Some(chol) = a.clone().cholesky() {
        return Ok(chol.solve(b));
    }
    a.lu()
        .solve(b)
        .ok_or_else(|| Error::Singular("MMSE inner matrix is singular".into()))
}

/// Zero-pads `h_hat` to `n_g` and applies the unitary `n_g`-point DFT.
pub fn interpolate_full<T: Real>(h_hat: &[Cplx<T>], n_g: usize) -> Result<Vec<Cplx<T>>> {
    if h_hat.len() > n_g {
        return invalid(format!("{} taps exceed {n_g} bins", h_hat.len()));
    }
    let scale = T::one() / T::from_usize_lossy(n_g).sqrt();
    Ok((0..n_g)
        .map(|k| {
            h_hat
                .iter()
                .enumerate()
                .fold(Complex::new(T::zero(), T::zero()), |acc, (t, &h)| {
                    acc + h * twiddle::<T>(k * t, n_g)
                })
                * scale
        })
        .collect())
}

/// Single-antenna bound `σ² · Σ_{k∈K} 1/|P_k|²`, attained by zero forcing.
pub fn crlb_siso<T: Real, S: Sample<T>>(p: &[S], k_set: &[usize], sigma2: T) -> Result<T> {
    if !(sigma2 >= T::zero()) {
        return invalid("noise variance must be non-negative");
    }
    Ok(sigma2 * nef(p, k_set)?)
}

/// Per-antenna bound on a comb: depends only on that antenna's preamble.
pub fn crlb_mimo<T: Real, S: Sample<T>>(p_i: &[S], comb: &[usize], sigma2: T) -> Result<T> {
    crlb_siso(p_i, comb, sigma2)
}

/// Expected `‖ĝ − g‖²` of the LS fit with ZF tone estimates of per-tone
/// noise variance `σ²/|P_k|²`: `tr(F⁺ D F⁺ᴴ)`.
pub fn ls_analytic_mse<T: Real, S: Sample<T>>(
    p_tones: &[S],
    sigma2: T,
    grid: &ToneGrid<T>,
) -> Result<T> {
    let d = tone_noise(p_tones, sigma2, grid)?;
    let pinv = pseudo_inverse(grid)?;
    let mut acc = T::zero();
    for r in 0..pinv.nrows() {
        for (c, &dc) in d.iter().enumerate() {
            acc += pinv[(r, c)].norm_sqr() * dc;
        }
    }
    Ok(acc)
}

/// Expected `‖ĝ − g‖²` of the MMSE fit under its own prior:
/// `tr(I − F_Tᴴ [F_T F_Tᴴ + D]⁻¹ F_T)`.
pub fn mmse_analytic_mse<T: Real, S: Sample<T>>(
    p_tones: &[S],
    sigma2: T,
    grid: &ToneGrid<T>,
) -> Result<T> {
    let inner = mmse_inner(p_tones, sigma2, grid)?;
    let mut acc = T::from_usize_lossy(grid.l_c);
    for c in 0..grid.l_c {
        let col = grid.f_t.column(c).into_owned();
        let x = solve_hermitian(inner.clone(), &col)?;
        acc -= col.dotc(&x).re;
    }
    Ok(acc.max(T::zero()))
}

/// Lower bound on `E‖ĝ − g‖²` for unbiased tap estimators from the tone
/// observations: `tr((F_Tᴴ D⁻¹ F_T)⁻¹)`.
pub fn tone_crlb<T: Real, S: Sample<T>>(p_tones: &[S], sigma2: T, grid: &ToneGrid<T>) -> Result<T> {
    let d = tone_noise(p_tones, sigma2, grid)?;
    if sigma2 == T::zero() {
        return Ok(T::zero());
    }
    let mut fisher = DMatrix::<Cplx<T>>::zeros(grid.l_c, grid.l_c);
    for (k, &dk) in d.iter().enumerate() {
        let row = grid.f_t.row(k);
        for a in 0..grid.l_c {
            for b in 0..grid.l_c {
                fisher[(a, b)] += row[a].conj() * row[b] / Complex::from(dk);
            }
        }
    }
    let inv = fisher.cholesky().ok_or(Error::RankDeficient {
        rank: grid.k_prime.len().min(grid.l_c),
        required: grid.l_c,
    })?;
    let id = DMatrix::identity(grid.l_c, grid.l_c);
    let cov = inv.solve(&id);
    Ok((0..grid.l_c).fold(T::zero(), |a, i| a + cov[(i, i)].re))
}

fn tone_noise<T: Real, S: Sample<T>>(p_tones: &[S], sigma2: T, grid: &ToneGrid<T>) -> Result<Vec<T>> {
    grid.check_tones(p_tones.len())?;
    if !(sigma2 >= T::zero()) {
        return invalid("noise variance must be non-negative");
    }
    p_tones
        .iter()
        .zip(&grid.k_prime)
        .map(|(p, k)| {
            let pw = p.power();
            if pw > T::zero() {
                Ok(sigma2 / pw)
            } else {
                invalid(format!("preamble is zero at tone {k}"))
            }
        })
        .collect()
}

fn pseudo_inverse<T: Real>(grid: &ToneGrid<T>) -> Result<DMatrix<Cplx<T>>> {
    let mut cols = Vec::with_capacity(grid.k_prime.len());
    for k in 0..grid.k_prime.len() {
        let mut e = vec![Complex::new(T::zero(), T::zero()); grid.k_prime.len()];
        e[k] = Complex::new(T::one(), T::zero());
        cols.push(DVector::from_vec(ls_time_estimate(&e, grid)?));
    }
    Ok(DMatrix::from_columns(&cols))
}

/// Which estimator a Monte-Carlo run evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Zf,
    Ls,
    Mmse,
}

impl Estimator {
    pub fn label(self) -> &'static str {
        match self {
            Estimator::Zf => "ZF",
            Estimator::Ls => "LS",
            Estimator::Mmse => "MMSE",
        }
    }
}

/// Monte-Carlo MSE per SNR point.
///
/// For ZF the error is `Σ_{k∈K} |Ĥ_k − H_k|²`; for LS and MMSE it is the
/// full-band `Σ_k |Ĥ_FULL,k − H_k|²` after interpolation. `analytic_mse` is
/// `σ²ξ` for ZF and the closed-form estimator MSE otherwise; `crlb` is the
/// unbiased bound for the same quantity (equal to `analytic_mse` for ZF).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationReport {
    pub estimator: Estimator,
    pub trials: usize,
    pub snr_db: Vec<f64>,
    pub empirical_mse: Vec<f64>,
    /// Standard error of each `empirical_mse` entry.
    pub std_error: Vec<f64>,
    pub analytic_mse: Vec<f64>,
    pub crlb: Vec<f64>,
}

impl EstimationReport {
    pub const CSV_HEADER: [&'static str; 5] =
        ["snr_db", "empirical_mse", "analytic_mse", "crlb", "trials"];

    /// Rows matching [`Self::CSV_HEADER`].
    pub fn csv_rows(&self) -> Vec<[String; 5]> {
        (0..self.snr_db.len())
            .map(|i| {
                [
                    self.snr_db[i].to_string(),
                    self.empirical_mse[i].to_string(),
                    self.analytic_mse[i].to_string(),
                    self.crlb[i].to_string(),
                    self.trials.to_string(),
                ]
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Cplx<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn zf_noiseless_and_noise_only() {
        let p = [1.0, 2.0, -0.5, 4.0];
        let h = [c(0.3, -1.0), c(1.0, 1.0), c(-2.0, 0.5), c(0.0, 1.0)];
        let y: Vec<_> = h.iter().zip(&p).map(|(h, p)| h * p).collect();
        let est = zf_estimate(&y, &p, &[0, 1, 2]).unwrap();
        for (k, e) in est.iter().enumerate() {
            assert_relative_eq!(e.re, h[k].re, epsilon = 1e-15);
            assert_relative_eq!(e.im, h[k].im, epsilon = 1e-15);
        }
        let noise = [c(0.1, 0.2), c(-0.4, 0.0), c(0.0, 0.0), c(1.0, 1.0)];
        let est = zf_estimate(&noise, &p, &[1, 3]).unwrap();
        assert_eq!(est, vec![noise[1] / 2.0, noise[3] / 4.0]);
        assert!(zf_estimate(&noise, &[1.0, 0.0, 1.0, 1.0], &[1]).is_err());
    }

    #[test]
    fn zf_accepts_complex_preambles() {
        let p = [c(0.0, 2.0)];
        let y = [c(0.0, 2.0) * c(1.0, -1.0)];
        let est = zf_estimate(&y, &p, &[0]).unwrap();
        assert_relative_eq!(est[0].re, 1.0, epsilon = 1e-15);
        assert_relative_eq!(est[0].im, -1.0, epsilon = 1e-15);
    }

    #[test]
    fn tone_grid_rows_are_dft_rows() {
        let g = ToneGrid::<f64>::new(vec![1, 5, 6], 2, 8).unwrap();
        let w = crate::spectral::build_dft::<f64>(8).unwrap();
        for (r, &k) in g.k_prime.iter().enumerate() {
            for col in 0..2 {
                assert_relative_eq!((g.f_t[(r, col)] - w[(k, col)]).norm(), 0.0, epsilon = 1e-15);
            }
        }
        assert!(g.is_overdetermined());
        assert!(ToneGrid::<f64>::new(vec![], 2, 8).is_err());
        assert!(ToneGrid::<f64>::new(vec![8], 2, 8).is_err());
        assert!(ToneGrid::<f64>::new(vec![1, 1], 1, 8).is_err());
        assert!(ToneGrid::<f64>::new(vec![1], 9, 8).is_err());
    }

    #[test]
    fn ls_recovers_consistent_taps() {
        let grid = ToneGrid::<f64>::new((9..25).collect(), 10, 32).unwrap();
        let h: Vec<_> = (0..10)
            .map(|t| c((-0.15 * t as f64).exp(), 0.3 * t as f64 - 1.0))
            .collect();
        let tones = grid.tones_of_taps(&h).unwrap();
        let g = ls_time_estimate(&tones, &grid).unwrap();
        let root = 32f64.sqrt();
        for (gi, hi) in g.iter().zip(&h) {
            assert!((gi / root - hi).norm() < 1e-8);
        }
    }

    #[test]
    fn ls_on_full_grid_is_adjoint() {
        let grid = ToneGrid::<f64>::new((0..6).collect(), 6, 6).unwrap();
        let b: Vec<_> = (0..6).map(|i| c(i as f64, 1.0 - i as f64)).collect();
        let ls = ls_time_estimate(&b, &grid).unwrap();
        let adj = grid.f_t.adjoint() * DVector::from_vec(b);
        for (a, e) in ls.iter().zip(adj.iter()) {
            assert!((a - e).norm() < 1e-12);
        }
    }

    #[test]
    fn ls_flags_underdetermined_grid() {
        let grid = ToneGrid::<f64>::new(vec![0, 1], 3, 8).unwrap();
        assert!(matches!(
            ls_time_estimate(&[c(1.0, 0.0); 2], &grid),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn mmse_limits() {
        let grid = ToneGrid::<f64>::new(vec![0, 2, 3, 7], 4, 8).unwrap();
        let b: Vec<_> = (0..4).map(|i| c(1.0 + i as f64, -0.5)).collect();
        let p = [1.0, 2.0, 0.5, 1.0];
        let ls = ls_time_estimate(&b, &grid).unwrap();
        let mm = mmse_estimate(&b, &p, 0.0, &grid).unwrap();
        for (a, e) in ls.iter().zip(&mm) {
            assert!((a - e).norm() < 1e-8);
        }
        let far = mmse_estimate(&b, &p, 1e12, &grid).unwrap();
        assert!(far.iter().all(|v| v.norm() < 1e-9));
        assert!(mmse_estimate(&b, &[1.0, 0.0, 1.0, 1.0], 1.0, &grid).is_err());
    }

    #[test]
    fn interpolation_of_impulse_is_flat() {
        let r = interpolate_full(&[c(1.0, 0.0)], 16).unwrap();
        for v in r {
            assert_relative_eq!(v.re, 0.25, epsilon = 1e-15);
            assert_relative_eq!(v.im, 0.0, epsilon = 1e-15);
        }
        assert!(interpolate_full(&[c(1.0, 0.0); 3], 2).is_err());
    }

    #[test]
    fn interpolation_matches_grid_rows() {
        let grid = ToneGrid::<f64>::new(vec![3, 4, 9], 3, 12).unwrap();
        let h = [c(1.0, 0.5), c(-0.2, 0.1), c(0.3, 0.0)];
        let full = interpolate_full(&h, 12).unwrap();
        let rows = &grid.f_t * DVector::from_column_slice(&h);
        for (r, &k) in grid.k_prime.iter().enumerate() {
            assert!((full[k] - rows[r]).norm() < 1e-14);
        }
    }

    #[test]
    fn crlb_values() {
        let amp = (100.0f64 / 5.0).sqrt();
        let p = vec![amp; 5];
        let k: Vec<usize> = (0..5).collect();
        assert_relative_eq!(crlb_siso(&p, &k, 1.0).unwrap(), 0.25, max_relative = 1e-14);
        assert_eq!(crlb_siso(&p, &k, 0.0).unwrap(), 0.0);
        assert_eq!(
            crlb_mimo(&p, &k, 0.7).unwrap(),
            crlb_siso(&p, &k, 0.7).unwrap()
        );
        assert!(crlb_mimo(&[1.0, 0.0], &[1], 1.0).is_err());
    }

    #[test]
    fn analytic_tone_mse_orderings() {
        let grid = ToneGrid::<f64>::new((9..25).collect(), 10, 32).unwrap();
        let p: Vec<f64> = (0..16).map(|i| 1.0 + 0.1 * i as f64).collect();
        for s2 in [1e-3, 0.1, 10.0] {
            let ls = ls_analytic_mse(&p, s2, &grid).unwrap();
            let mm = mmse_analytic_mse(&p, s2, &grid).unwrap();
            let lb = tone_crlb(&p, s2, &grid).unwrap();
            assert!(mm <= ls);
            assert!(lb <= ls * (1.0 + 1e-10));
        }
        let flat = vec![2.0; 16];
        assert_relative_eq!(
            ls_analytic_mse(&flat, 0.5, &grid).unwrap(),
            tone_crlb(&flat, 0.5, &grid).unwrap(),
            max_relative = 1e-10
        );
    }
}
