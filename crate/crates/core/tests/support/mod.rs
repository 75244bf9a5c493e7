//! Independent reference computations and property checks shared by the
//! integration tests of both crates.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use preamble_forge::design::juxtapose;
use preamble_forge::spectral::build_dft;
use preamble_forge::{FrameConfig, SpectrumOperator};

/// Oversampled spectrum of a frequency-domain preamble, synthesised sample
/// by sample without any of the library's matrices.
pub fn direct_spectrum(cfg: &FrameConfig, p: &[Complex64]) -> Vec<Complex64> {
    let n = cfg.n;
    let x: Vec<Complex64> = (0..n)
        .map(|t| {
            p.iter()
                .enumerate()
                .map(|(k, pk)| {
                    pk * Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64)
                })
                .sum::<Complex64>()
                / (n as f64).sqrt()
        })
        .collect();
    let mut s: Vec<Complex64> = x[n - cfg.n_cp..].iter().chain(&x).copied().collect();
    if cfg.pinching_enabled && cfg.l_w > 0 {
        let l = cfg.l_w;
        let ramp: Vec<f64> = (0..l)
            .map(|k| 0.5 * (1.0 - (std::f64::consts::PI * (k + 1) as f64 / (l + 1) as f64).cos()))
            .collect();
        let len = s.len();
        let mut ext = Vec::with_capacity(len + 2 * l);
        for k in 0..l {
            ext.push(s[len - l + k] * ramp[k]);
        }
        ext.extend_from_slice(&s);
        for k in 0..l {
            ext.push(s[k] * ramp[l - 1 - k]);
        }
        s = ext;
    }
    let u = cfg.u();
    (0..u)
        .map(|j| {
            s.iter()
                .enumerate()
                .map(|(t, v)| {
                    v * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * ((j * t) % u) as f64 / u as f64)
                })
                .sum::<Complex64>()
                / (u as f64).sqrt()
        })
        .collect()
}

/// `Re(AᴴA)` over the OOB rows, column by column from `direct_spectrum`.
pub fn direct_gram(cfg: &FrameConfig) -> DMatrix<f64> {
    let n = cfg.n;
    let cols: Vec<Vec<Complex64>> = (0..n)
        .map(|i| {
            let mut e = vec![Complex64::new(0.0, 0.0); n];
            e[i] = Complex64::new(1.0, 0.0);
            let z = direct_spectrum(cfg, &e);
            cfg.oob_indices.iter().map(|&j| z[j]).collect()
        })
        .collect();
    DMatrix::from_fn(n, n, |a, b| {
        cols[a]
            .iter()
            .zip(&cols[b])
            .map(|(x, y)| (x.conj() * y).re)
            .sum()
    })
}

/// Euclidean projection onto `{‖x‖² ≤ t} ∩ {xᵀQx ≤ ε}`.
///
/// `I` and `Q` share Q's eigenbasis, so the projection is
/// `y_i = z_i / (1 + λ + ν q_i)` with multipliers found by nested
/// bisection on the concave dual.
pub struct TwoEllipsoids {
    v: DMatrix<f64>,
    q: Vec<f64>,
    t: f64,
    eps: f64,
}

impl TwoEllipsoids {
    pub fn new(gram: &DMatrix<f64>, t: f64, eps: f64) -> Self {
        let eig = gram.clone().symmetric_eigen();
        TwoEllipsoids {
            v: eig.eigenvectors,
            q: eig.eigenvalues.iter().map(|&x| x.max(0.0)).collect(),
            t,
            eps,
        }
    }

    fn sums(&self, z: &[f64], lam: f64, nu: f64) -> (f64, f64) {
        let mut power = 0.0;
        let mut oob = 0.0;
        for (zi, qi) in z.iter().zip(&self.q) {
            let y = zi / (1.0 + lam + nu * qi);
            power += y * y;
            oob += qi * y * y;
        }
        (power, oob)
    }

    fn lambda_for(&self, z: &[f64], nu: f64) -> f64 {
        if self.sums(z, 0.0, nu).0 <= self.t {
            return 0.0;
        }
        let mut hi = 1.0;
        while self.sums(z, hi, nu).0 > self.t {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.sums(z, mid, nu).0 > self.t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }

    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        let z: Vec<f64> = (self.v.transpose() * x).iter().copied().collect();
        let lam0 = self.lambda_for(&z, 0.0);
        let (lam, nu) = if self.sums(&z, lam0, 0.0).1 <= self.eps {
            (lam0, 0.0)
        } else {
            let mut hi = 1.0;
            while self.sums(&z, self.lambda_for(&z, hi), hi).1 > self.eps {
                hi *= 2.0;
            }
            let mut lo = 0.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if self.sums(&z, self.lambda_for(&z, mid), mid).1 > self.eps {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            (self.lambda_for(&z, hi), hi)
        };
        let y = DVector::from_iterator(
            z.len(),
            z.iter()
                .zip(&self.q)
                .map(|(zi, qi)| zi / (1.0 + lam + nu * qi)),
        );
        &self.v * y
    }
}

/// `min Σ_{k∈pos} x_k⁻²` over the two-ellipsoid set by projected gradient
/// with backtracking. Returns the final iterate and objective.
pub fn projected_gradient_min_nef(
    gram: &DMatrix<f64>,
    positions: &[usize],
    t: f64,
    eps: f64,
    max_iter: usize,
) -> (DVector<f64>, f64) {
    let dim = gram.nrows();
    let set = TwoEllipsoids::new(gram, t, eps);
    let f = |x: &DVector<f64>| positions.iter().map(|&k| 1.0 / (x[k] * x[k])).sum::<f64>();
    let grad = |x: &DVector<f64>| {
        let mut g = DVector::zeros(dim);
        for &k in positions {
            g[k] = -2.0 / x[k].powi(3);
        }
        g
    };
    // feasible positive start: small flat in-band vector
    let mut x: DVector<f64> = DVector::zeros(dim);
    for &k in positions {
        x[k] = 1.0;
    }
    let scale: f64 = (0.25 * t / x.norm_squared())
        .min(0.25 * eps / x.dot(&(gram * &x)).max(1e-300))
        .sqrt();
    x *= scale;
    let mut step = 1e-3;
    let mut fx = f(&x);
    for _ in 0..max_iter {
        let g = grad(&x);
        let mut accepted = None;
        for _ in 0..80 {
            let cand = set.project(&(&x - &g * step));
            if positions.iter().all(|&k| cand[k] > 0.0) {
                let d = &cand - &x;
                let fc = f(&cand);
                if fc <= fx + g.dot(&d) + d.norm_squared() / (2.0 * step) {
                    accepted = Some((cand, fc, d.norm()));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((cand, fc, moved)) = accepted else { break };
        x = cand;
        let done = moved <= 1e-15 * x.norm();
        fx = fc;
        step *= 1.5;
        if done {
            break;
        }
    }
    (x, fx)
}

/// Largest `|Σ W Wᴴ − I|` entry.
pub fn dft_unitarity_error(n: usize) -> f64 {
    let w = build_dft::<f64>(n).unwrap();
    let prod = &w * w.adjoint();
    let mut err = 0.0f64;
    for r in 0..n {
        for c in 0..n {
            let target = if r == c { 1.0 } else { 0.0 };
            err = err.max((prod[(r, c)] - Complex64::new(target, 0.0)).norm());
        }
    }
    err
}

/// Relative error of `Z(aP + bQ)` against `aZP + bZQ`.
pub fn linearity_error(op: &SpectrumOperator<f64>, p: &[Complex64], q: &[Complex64], a: f64, b: f64) -> f64 {
    let mix: Vec<Complex64> = p.iter().zip(q).map(|(x, y)| x * a + y * b).collect();
    let lhs = op.apply(&mix);
    let zp = op.apply(p);
    let zq = op.apply(q);
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..lhs.len() {
        let rhs = zp[i] * a + zq[i] * b;
        num += (lhs[i] - rhs).norm_sqr();
        den += rhs.norm_sqr().max(lhs[i].norm_sqr());
    }
    (num / den.max(1e-300)).sqrt()
}

/// Relative change of the fractional OOB when `p` is scaled by `c`.
pub fn scale_invariance_error(op: &SpectrumOperator<f64>, p: &[Complex64], c: f64) -> f64 {
    let a = op.fractional_oob(p).unwrap();
    let scaled: Vec<Complex64> = p.iter().map(|v| v * c).collect();
    let b = op.fractional_oob(&scaled).unwrap();
    ((a - b) / a.max(1e-300)).abs()
}

/// Juxtaposing a block supported on `m` consecutive bins `w0..w0+m`
/// tiles it: `P_O[i] = P[w(i)]` where `w(i) ≡ i (mod m)` lies in the window.
pub fn tiling_holds(values: &[f64], w0: usize, m: usize, copies: usize) -> bool {
    let n = m * copies;
    let mut block = vec![0.0; n];
    for (i, &v) in values.iter().enumerate() {
        block[(w0 + i) % n] = v;
    }
    let out = juxtapose(&block, m, n).unwrap();
    (0..n).all(|i| {
        let offset = (i + n - w0 % n) % m;
        out[i] == block[(w0 + offset) % n]
    })
}

/// Max relative difference between `2QP` and central differences of the
/// operator's OOB power along the coordinate axes.
pub fn oob_gradient_error(op: &SpectrumOperator<f64>, p: &[f64]) -> f64 {
    let q = op.oob_gram();
    let pv = DVector::from_column_slice(p);
    let analytic = &q * &pv * 2.0;
    let scale = analytic.amax().max(1e-12);
    let mut worst = 0.0f64;
    for i in 0..p.len() {
        let h = 1e-5 * (1.0 + p[i].abs());
        let mut plus = p.to_vec();
        let mut minus = p.to_vec();
        plus[i] += h;
        minus[i] -= h;
        let f = |v: &[f64]| {
            let c: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
            op.oob_power(&c)
        };
        let fd = (f(&plus) - f(&minus)) / (2.0 * h);
        worst = worst.max((fd - analytic[i]).abs() / scale);
    }
    worst
}
