//! Linear operator chain from a frequency-domain preamble to its oversampled
//! transmit spectrum, and the fractional out-of-band (OOB) metric.
//!
//! The chain is `Z = W_U · pad · T · C · W_Nᴴ · P`: inverse unitary DFT to
//! time, cyclic-prefix insertion, optional pinching (cyclic extension plus a
//! raised-cosine fade), zero padding to `u` samples and a `u`-point unitary
//! DFT. All DFTs use the forward kernel `e^{-j2πkn/N}/√N`.

use nalgebra::DMatrix;
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scalar::{norm_sqr, twiddle, Cplx, Real};

/// Default OOB guard, in native bins, on each side of the estimation band.
pub const DEFAULT_OOB_GUARD: usize = 1;

/// Structural constants of one preamble frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameConfig {
    /// In-band frequency bins.
    pub n: usize,
    /// Cyclic prefix length in samples.
    pub n_cp: usize,
    /// Pinching ramp length in samples (ignored unless `pinching_enabled`).
    pub l_w: usize,
    /// Oversampling factor of the spectrum grid.
    pub l_os: usize,
    pub pinching_enabled: bool,
    /// Estimation bins, ordered, within `0..n`.
    pub k_set: Vec<usize>,
    /// Indices into the oversampled spectrum counted as out-of-band.
    pub oob_indices: Vec<usize>,
}

impl FrameConfig {
    /// Builds a config whose OOB region is everything outside the band
    /// spanned by `k_set`, widened by [`DEFAULT_OOB_GUARD`] bins.
    pub fn new(
        n: usize,
        n_cp: usize,
        l_w: usize,
        l_os: usize,
        pinching_enabled: bool,
        k_set: Vec<usize>,
    ) -> Result<Self> {
        let mut cfg = FrameConfig {
            n,
            n_cp,
            l_w,
            l_os,
            pinching_enabled,
            k_set,
            oob_indices: Vec::new(),
        };
        cfg.check_structure()?;
        cfg.oob_indices = guard_band_oob(&cfg, DEFAULT_OOB_GUARD);
        Ok(cfg)
    }

    /// Replaces the OOB region by the guard-band rule with `guard` bins.
    pub fn with_oob_guard(mut self, guard: usize) -> Self {
        self.oob_indices = guard_band_oob(&self, guard);
        self
    }

    pub fn with_oob_indices(mut self, oob_indices: Vec<usize>) -> Result<Self> {
        self.oob_indices = oob_indices;
        self.validate()?;
        Ok(self)
    }

    /// Same frame with a different estimation set; the OOB region is kept.
    pub fn with_k_set(mut self, k_set: Vec<usize>) -> Result<Self> {
        self.k_set = k_set;
        self.validate()?;
        Ok(self)
    }

    /// Same frame with pinching toggled. The oversampled length changes, so
    /// the OOB region is recomputed with `guard`.
    pub fn with_pinching(mut self, enabled: bool, guard: usize) -> Self {
        self.pinching_enabled = enabled;
        self.oob_indices = guard_band_oob(&self, guard);
        self
    }

    /// Effective pinch ramp length (0 when pinching is off).
    pub fn ramp_len(&self) -> usize {
        if self.pinching_enabled {
            self.l_w
        } else {
            0
        }
    }

    /// Time-domain length after CP insertion and pinching.
    pub fn extended_len(&self) -> usize {
        self.n + self.n_cp + 2 * self.ramp_len()
    }

    /// Oversampled spectrum length.
    pub fn u(&self) -> usize {
        self.l_os * self.extended_len()
    }

    fn check_structure(&self) -> Result<()> {
        if self.n == 0 {
            return invalid("n must be positive");
        }
        if self.l_os == 0 {
            return invalid("oversampling factor must be at least 1");
        }
        if self.n_cp > self.n {
            return invalid(format!("CP length {} exceeds symbol length {}", self.n_cp, self.n));
        }
        if self.pinching_enabled && self.l_w > self.n + self.n_cp {
            return invalid("pinch ramp longer than the CP-extended symbol");
        }
        if self.k_set.is_empty() {
            return invalid("k_set must not be empty");
        }
        check_index_set(&self.k_set, self.n, "k_set")
    }

    /// Checks every structural invariant.
    pub fn validate(&self) -> Result<()> {
        self.check_structure()?;
        check_index_set(&self.oob_indices, self.u(), "oob_indices")
    }
}

fn check_index_set(set: &[usize], bound: usize, what: &str) -> Result<()> {
    let mut seen = vec![false; bound];
    for &i in set {
        if i >= bound {
            return invalid(format!("{what} entry {i} out of range 0..{bound}"));
        }
        if seen[i] {
            return invalid(format!("{what} contains duplicate {i}"));
        }
        seen[i] = true;
    }
    Ok(())
}

/// Oversampled bins whose centre frequency lies outside
/// `[min(k_set) - guard, max(k_set) + guard]` (native-bin units, circular).
///
/// Membership is decided in exact integer arithmetic: bin `j` sits at
/// `j·n/u` native bins.
pub fn guard_band_oob(cfg: &FrameConfig, guard: usize) -> Vec<usize> {
    let n = cfg.n as i128;
    let u = cfg.u() as i128;
    let (Some(&lo), Some(&hi)) = (cfg.k_set.iter().min(), cfg.k_set.iter().max()) else {
        return Vec::new();
    };
    let width = (hi - lo + 2 * guard) as i128;
    if width >= n {
        return Vec::new();
    }
    let start = (lo as i128 - guard as i128) * u;
    (0..cfg.u())
        .filter(|&j| {
            let offset = (j as i128 * n - start).rem_euclid(n * u);
            offset > width * u
        })
        .collect()
}

/// Rising and falling raised-cosine ramps used for pinching.
#[derive(Debug, Clone, PartialEq)]
pub struct PinchWindow<T> {
    pub ramp_up: Vec<T>,
    pub ramp_down: Vec<T>,
}

impl<T: Real> PinchWindow<T> {
    /// `w_k = ½(1 − cos(π(k+1)/(l_w+1)))` for `k = 0..l_w`; the falling ramp
    /// is its reversal. Endpoints 0 and 1 are excluded.
    pub fn raised_cosine(l_w: usize) -> Self {
        let denom = T::from_usize_lossy(l_w + 1);
        let half = T::lit(0.5);
        let ramp_up: Vec<T> = (0..l_w)
            .map(|k| half * (T::one() - (T::pi() * T::from_usize_lossy(k + 1) / denom).cos()))
            .collect();
        let ramp_down = ramp_up.iter().rev().copied().collect();
        PinchWindow { ramp_up, ramp_down }
    }

    pub fn len(&self) -> usize {
        self.ramp_up.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ramp_up.is_empty()
    }
}

/// Unitary `n`-point DFT matrix with kernel `e^{-j2πkn/N}/√N`.
pub fn build_dft<T: Real>(n: usize) -> Result<DMatrix<Cplx<T>>> {
    if n == 0 {
        return invalid("DFT size must be positive");
    }
    Ok(dft_columns(n, n))
}

/// First `cols` columns of the unitary `m`-point DFT.
fn dft_columns<T: Real>(m: usize, cols: usize) -> DMatrix<Cplx<T>> {
    let scale = T::one() / T::from_usize_lossy(m).sqrt();
    DMatrix::from_fn(m, cols, |k, t| twiddle::<T>(k * t, m) * scale)
}

/// `(n + n_cp) × n` selector that prepends the last `n_cp` samples.
pub fn build_cp_matrix<T: Real>(n: usize, n_cp: usize) -> Result<DMatrix<T>> {
    if n_cp > n {
        return invalid(format!("CP length {n_cp} exceeds symbol length {n}"));
    }
    Ok(DMatrix::from_fn(n + n_cp, n, |r, c| {
        if (r + n - n_cp) % n == c {
            T::one()
        } else {
            T::zero()
        }
    }))
}

/// `(n_ext_in + 2·l_w) × n_ext_in` map: prefix with the last `l_w` input
/// samples, suffix with the first `l_w`, then scale by
/// `[ramp_up; 1…1; ramp_down]`.
pub fn build_pinch_extension<T: Real>(
    n_ext_in: usize,
    window: &PinchWindow<T>,
) -> Result<DMatrix<T>> {
    let l_w = window.len();
    if l_w > n_ext_in {
        return invalid(format!("pinch ramp {l_w} longer than input {n_ext_in}"));
    }
    let rows = n_ext_in + 2 * l_w;
    let mut m = DMatrix::zeros(rows, n_ext_in);
    for r in 0..rows {
        let src = (r + n_ext_in - l_w) % n_ext_in;
        let w = if r < l_w {
            window.ramp_up[r]
        } else if r >= l_w + n_ext_in {
            window.ramp_down[r - l_w - n_ext_in]
        } else {
            T::one()
        };
        m[(r, src)] = w;
    }
    Ok(m)
}

/// Dense `u × n` map from preamble to oversampled spectrum, with the OOB
/// row selection.
#[derive(Debug, Clone)]
pub struct SpectrumOperator<T: Real> {
    pub matrix: DMatrix<Cplx<T>>,
    pub oob_indices: Vec<usize>,
    oob_rows: DMatrix<Cplx<T>>,
    n: usize,
}

impl<T: Real> SpectrumOperator<T> {
    pub fn new(cfg: &FrameConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.n;
        let idft = build_dft::<T>(n)?.adjoint();
        let cp = build_cp_matrix::<T>(n, cfg.n_cp)?;
        let mut time = cp.map(|x| Complex::new(x, T::zero())) * idft;
        if cfg.pinching_enabled && cfg.l_w > 0 {
            let window = PinchWindow::<T>::raised_cosine(cfg.l_w);
            let pinch = build_pinch_extension(n + cfg.n_cp, &window)?;
            time = pinch.map(|x| Complex::new(x, T::zero())) * time;
        }
        // zero padding only touches the first `extended_len` DFT columns
        let matrix = dft_columns::<T>(cfg.u(), cfg.extended_len()) * time;
        let oob_rows = matrix.select_rows(cfg.oob_indices.iter());
        Ok(SpectrumOperator {
            matrix,
            oob_indices: cfg.oob_indices.clone(),
            oob_rows,
            n,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn u(&self) -> usize {
        self.matrix.nrows()
    }

    /// `S·W_U·…` restricted to the OOB rows.
    pub fn oob_selector(&self) -> &DMatrix<Cplx<T>> {
        &self.oob_rows
    }

    pub fn apply(&self, p: &[Cplx<T>]) -> Vec<Cplx<T>> {
        mat_vec(&self.matrix, p)
    }

    pub fn apply_real(&self, p: &[T]) -> Vec<Cplx<T>> {
        let pc: Vec<Cplx<T>> = p.iter().map(|&x| Complex::new(x, T::zero())).collect();
        self.apply(&pc)
    }

    /// `‖S·Z‖²` for a complex preamble.
    pub fn oob_power(&self, p: &[Cplx<T>]) -> T {
        norm_sqr(&mat_vec(&self.oob_rows, p))
    }

    /// Real symmetric `Q = Re(Aᴴ A)` with `A` the OOB rows, so that
    /// `‖S·Z‖² = Pᵀ Q P` for every real preamble `P`.
    pub fn oob_gram(&self) -> DMatrix<T> {
        let g = self.oob_rows.adjoint() * &self.oob_rows;
        let q = g.map(|z| z.re);
        (&q + q.transpose()) * T::lit(0.5)
    }

    /// `‖S·Z‖² / ‖P‖²`.
    pub fn fractional_oob(&self, p: &[Cplx<T>]) -> Result<T> {
        let energy = norm_sqr(p);
        if energy <= T::zero() {
            return invalid("fractional OOB of an all-zero preamble is undefined");
        }
        Ok(self.oob_power(p) / energy)
    }

    pub fn fractional_oob_real(&self, p: &[T]) -> Result<T> {
        let pc: Vec<Cplx<T>> = p.iter().map(|&x| Complex::new(x, T::zero())).collect();
        self.fractional_oob(&pc)
    }

    /// Power spectrum `|Z_j|²` paired with each bin's centre frequency in
    /// native-bin units.
    pub fn power_spectrum(&self, p: &[Cplx<T>]) -> Vec<(T, T)> {
        let z = self.apply(p);
        let scale = T::from_usize_lossy(self.n) / T::from_usize_lossy(self.u());
        z.iter()
            .enumerate()
            .map(|(j, v)| (T::from_usize_lossy(j) * scale, v.norm_sqr()))
            .collect()
    }
}

/// Fractional OOB of `p` under the operator built from `cfg`.
pub fn fractional_oob<T: Real>(p: &[Cplx<T>], cfg: &FrameConfig) -> Result<T> {
    if p.len() != cfg.n {
        return invalid(format!("preamble length {} != n = {}", p.len(), cfg.n));
    }
    SpectrumOperator::<T>::new(cfg)?.fractional_oob(p)
}

fn mat_vec<T: Real>(m: &DMatrix<Cplx<T>>, v: &[Cplx<T>]) -> Vec<Cplx<T>> {
    assert_eq!(m.ncols(), v.len(), "operator/vector length mismatch");
    (0..m.nrows())
        .map(|r| {
            m.row(r)
                .iter()
                .zip(v)
                .fold(Complex::new(T::zero(), T::zero()), |acc, (a, b)| acc + a * b)
        })
        .collect()
}
