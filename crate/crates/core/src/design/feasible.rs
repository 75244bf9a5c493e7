//! Phase-I: a strictly feasible starting preamble for the barrier method.

use nalgebra::{DMatrix, DVector};

use super::{DesignProblem, Mode};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Candidate directions with strictly positive in-band entries, cheapest
/// OOB ratio first.
fn candidate_directions<T: Real>(gram: &DMatrix<T>, positions: &[usize]) -> Vec<DVector<T>> {
    let dim = gram.nrows();
    let mut flat = DVector::zeros(dim);
    for &p in positions {
        flat[p] = T::one();
    }
    let mut out = vec![flat];

    if dim > 0 {
        let eig = gram.clone().symmetric_eigen();
        let (imin, _) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .fold((0, T::max_value().unwrap()), |(bi, bv), (i, &v)| {
                if v < bv {
                    (i, v)
                } else {
                    (bi, bv)
                }
            });
        let mut v = eig.eigenvectors.column(imin).into_owned();
        let in_band_sum = positions.iter().fold(T::zero(), |acc, &p| acc + v[p]);
        if in_band_sum < T::zero() {
            v = -v;
        }
        let norm = v.norm();
        if positions.iter().all(|&p| v[p] > norm * T::lit(1e-6)) {
            out.push(v);
        }
    }

    let ratio = |d: &DVector<T>| d.dot(&(gram * d)) / d.norm_squared();
    out.sort_by(|a, b| ratio(a).partial_cmp(&ratio(b)).unwrap_or(std::cmp::Ordering::Equal));
    out
}

/// Returns a strictly feasible point in the free coordinates.
///
/// `gram` is the OOB quadratic form restricted to the free variables and
/// `positions` the in-band entries within them. A `None` gram means the
/// OOB constraint is vacuous for this mask.
pub(crate) fn start_point<T: Real>(
    problem: &DesignProblem<T>,
    gram: &DMatrix<T>,
    positions: &[usize],
    floor: T,
    oob_active: bool,
) -> Result<DVector<T>> {
    let t_p = problem.t_p;
    let half = T::lit(0.5);
    let margin = T::lit(2.0);
    let candidates = candidate_directions(gram, positions);

    match problem.mode {
        Mode::MinNef => {
            let eps = problem.epsilon.unwrap_or(T::zero());
            for d in &candidates {
                let power = d.norm_squared();
                let oob = d.dot(&(gram * d));
                let mut scale2 = t_p * half / power;
                if oob_active && oob * scale2 >= eps * half {
                    scale2 = eps * half / oob;
                }
                let scale = scale2.sqrt();
                if positions.iter().all(|&p| d[p] * scale > floor * margin) {
                    return Ok(d * scale);
                }
            }
            let min_ratio = gram
                .clone()
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .fold(T::max_value().unwrap(), |m, &v| m.min(v))
                .max(T::zero());
            Err(Error::Infeasible {
                reason: format!(
                    "OOB cap {:e} below the leakage of any preamble with positive in-band entries",
                    eps.as_f64()
                ),
                certificate: (min_ratio * t_p * half).as_f64(),
            })
        }
        Mode::MinOob => {
            let xi0 = problem.xi_0.unwrap_or(T::zero());
            for d in &candidates {
                let power = d.norm_squared();
                let nef = positions
                    .iter()
                    .fold(T::zero(), |acc, &p| acc + T::one() / (d[p] * d[p]));
                // need nef/s² < ξ₀ and s²·power < T_P
                let lo = nef / xi0;
                let hi = t_p / power;
                if xi0 > T::zero() && lo * T::lit(1.0 + 1e-9) < hi {
                    let scale = (lo * hi).sqrt().sqrt();
                    if positions.iter().all(|&p| d[p] * scale > floor * margin) {
                        return Ok(d * scale);
                    }
                }
            }
            let m = T::from_usize_lossy(positions.len());
            Err(Error::Infeasible {
                reason: format!(
                    "NEF cap {:e} not above the minimum achievable at power {:e}",
                    xi0.as_f64(),
                    t_p.as_f64()
                ),
                certificate: (m * m / t_p).as_f64(),
            })
        }
    }
}
