//! Log-barrier interior-point method for the small smooth convex programs
//! produced by the preamble design problems.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Smooth convex function of the design vector.
#[derive(Debug, Clone)]
pub(crate) enum Func<T: Real> {
    /// `xᵀ Q x`, `Q` symmetric positive semidefinite.
    Quadratic(DMatrix<T>),
    /// `Σ_p x_p⁻²` over the listed positions (convex on `x_p > 0`).
    InverseSquares(Vec<usize>),
    /// `xᵀ x`.
    SquaredNorm,
}

impl<T: Real> Func<T> {
    pub(crate) fn value(&self, x: &DVector<T>) -> T {
        match self {
            Func::Quadratic(q) => x.dot(&(q * x)),
            Func::InverseSquares(pos) => pos.iter().fold(T::zero(), |acc, &p| {
                let v = x[p];
                acc + T::one() / (v * v)
            }),
            Func::SquaredNorm => x.norm_squared(),
        }
    }

    pub(crate) fn gradient(&self, x: &DVector<T>) -> DVector<T> {
        match self {
            Func::Quadratic(q) => q * x * T::lit(2.0),
            Func::InverseSquares(pos) => {
                let mut g = DVector::zeros(x.len());
                for &p in pos {
                    g[p] = -T::lit(2.0) / x[p].powi(3);
                }
                g
            }
            Func::SquaredNorm => x * T::lit(2.0),
        }
    }

    /// `h += scale · ∇²f(x)`.
    fn add_hessian(&self, x: &DVector<T>, scale: T, h: &mut DMatrix<T>) {
        match self {
            Func::Quadratic(q) => *h += q * (T::lit(2.0) * scale),
            Func::InverseSquares(pos) => {
                for &p in pos {
                    h[(p, p)] += scale * T::lit(6.0) / x[p].powi(4);
                }
            }
            Func::SquaredNorm => {
                for i in 0..x.len() {
                    h[(i, i)] += T::lit(2.0) * scale;
                }
            }
        }
    }
}

/// `minimize objective(x)` s.t. `f_i(x) ≤ b_i` and `x_p > floor` for every
/// listed position.
#[derive(Debug, Clone)]
pub(crate) struct Program<T: Real> {
    pub objective: Func<T>,
    pub constraints: Vec<(Func<T>, T)>,
    pub positive: Vec<usize>,
    pub floor: T,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Settings {
    /// Barrier weight growth per outer iteration.
    pub growth: f64,
    /// Armijo sufficient-decrease fraction.
    pub alpha: f64,
    /// Backtracking shrink factor.
    pub beta: f64,
    /// Stop once the duality-gap bound `m/t` drops below this fraction of
    /// the objective.
    pub gap_rel: f64,
    /// Newton decrement (`λ²/2`) tolerance for centering.
    pub newton_tol: f64,
    pub max_newton: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            growth: 10.0,
            alpha: 0.25,
            beta: 0.5,
            gap_rel: 1e-10,
            newton_tol: 1e-11,
            max_newton: 4000,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Outcome<T: Real> {
    pub x: DVector<T>,
    pub newton_iterations: usize,
    pub outer_iterations: usize,
    /// Barrier multiplier estimate `1/(t·slack_i)` per constraint.
    pub multipliers: Vec<T>,
    pub gap: T,
    /// `‖∇f₀ + Σ λ_i ∇f_i‖ / ‖∇f₀‖`.
    pub kkt_residual: T,
}

impl<T: Real> Program<T> {
    fn slacks(&self, x: &DVector<T>) -> Option<Vec<T>> {
        let mut out = Vec::with_capacity(self.constraints.len());
        for (f, b) in &self.constraints {
            let s = *b - f.value(x);
            if !(s > T::zero()) {
                return None;
            }
            out.push(s);
        }
        for &p in &self.positive {
            if !(x[p] - self.floor > T::zero()) {
                return None;
            }
        }
        Some(out)
    }

    pub(crate) fn strictly_feasible(&self, x: &DVector<T>) -> bool {
        self.slacks(x).is_some()
    }

    fn barrier_value(&self, x: &DVector<T>, t: T) -> Option<T> {
        let slacks = self.slacks(x)?;
        let mut v = t * self.objective.value(x);
        for s in slacks {
            v -= s.ln();
        }
        for &p in &self.positive {
            v -= (x[p] - self.floor).ln();
        }
        v.is_finite().then_some(v)
    }

    fn barrier_derivatives(&self, x: &DVector<T>, t: T) -> (DVector<T>, DMatrix<T>) {
        let n = x.len();
        let mut g = self.objective.gradient(x) * t;
        let mut h = DMatrix::zeros(n, n);
        self.objective.add_hessian(x, t, &mut h);
        for (f, b) in &self.constraints {
            let s = *b - f.value(x);
            let gf = f.gradient(x);
            g += &gf / s;
            f.add_hessian(x, T::one() / s, &mut h);
            h.ger(T::one() / (s * s), &gf, &gf, T::one());
        }
        for &p in &self.positive {
            let d = x[p] - self.floor;
            g[p] -= T::one() / d;
            h[(p, p)] += T::one() / (d * d);
        }
        (g, h)
    }

    fn constraint_count(&self) -> usize {
        self.constraints.len() + self.positive.len()
    }

    /// Relative stationarity residual with multipliers `λ_i` on the
    /// explicit constraints.
    pub(crate) fn kkt_residual(&self, x: &DVector<T>, multipliers: &[T]) -> T {
        let g0 = self.objective.gradient(x);
        let mut r = g0.clone();
        for ((f, _), &l) in self.constraints.iter().zip(multipliers) {
            r += f.gradient(x) * l;
        }
        let scale = g0.norm();
        if scale > T::zero() {
            r.norm() / scale
        } else {
            r.norm()
        }
    }
}

impl<T: Real> Program<T> {
    /// Near the optimum the slack of an active constraint is at roundoff
    /// level, so `1/(t·s)` is only accurate to a few digits. Refit the
    /// significant multipliers by least squares on the stationarity
    /// condition and keep whichever estimate has the smaller residual.
    fn refine_multipliers(&self, x: &DVector<T>, barrier: Vec<T>) -> (Vec<T>, T) {
        let base = self.kkt_residual(x, &barrier);
        let g0 = self.objective.gradient(x);
        let g0n = g0.norm();
        let grads: Vec<DVector<T>> = self.constraints.iter().map(|(f, _)| f.gradient(x)).collect();
        let active: Vec<usize> = (0..barrier.len())
            .filter(|&i| barrier[i] * grads[i].norm() > g0n * T::lit(1e-6))
            .collect();
        if active.is_empty() {
            return (barrier, base);
        }
        let a = DMatrix::from_fn(x.len(), active.len(), |r, c| grads[active[c]][r]);
        let Some(sol) = a.clone().svd(true, true).solve(&(-&g0), T::lit(1e-14)).ok() else {
            return (barrier, base);
        };
        if sol.iter().any(|&v| v < T::zero()) {
            return (barrier, base);
        }
        let mut fitted = vec![T::zero(); barrier.len()];
        for (c, &i) in active.iter().enumerate() {
            fitted[i] = sol[c];
        }
        let r = self.kkt_residual(x, &fitted);
        if r < base {
            (fitted, r)
        } else {
            (barrier, base)
        }
    }
}

fn newton_direction<T: Real>(h: &DMatrix<T>, g: &DVector<T>) -> Option<DVector<T>> {
    let neg_g = -g;
    if let Some(chol) = h.clone().cholesky() {
        return Some(chol.solve(&neg_g));
    }
    // Loss of definiteness from roundoff: retry with growing diagonal shift.
    let scale = (0..h.nrows()).fold(T::zero(), |m, i| m.max(h[(i, i)].abs()));
    let mut shift = scale * T::lit(1e-14);
    for _ in 0..12 {
        let mut hs = h.clone();
        for i in 0..hs.nrows() {
            hs[(i, i)] += shift;
        }
        if let Some(chol) = hs.cholesky() {
            return Some(chol.solve(&neg_g));
        }
        shift *= T::lit(100.0);
    }
    None
}

const MAX_STAGE_STEPS: usize = 200;

/// Runs the barrier method from the strictly feasible `x0`.
pub(crate) fn minimize<T: Real>(
    prog: &Program<T>,
    x0: DVector<T>,
    settings: &Settings,
) -> Result<Outcome<T>> {
    if !prog.strictly_feasible(&x0) {
        return Err(Error::InvalidArgument(
            "barrier start point is not strictly feasible".into(),
        ));
    }
    let m = T::from_usize_lossy(prog.constraint_count().max(1));
    let alpha = T::lit(settings.alpha);
    let beta = T::lit(settings.beta);
    let growth = T::lit(settings.growth);
    let newton_tol = T::lit(settings.newton_tol);
    let tiny_step = T::lit(1e-18);

    let mut x = x0;
    let f_start = prog.objective.value(&x).abs();
    // Initial weight balances the objective against the barrier terms.
    let barrier_start = prog.barrier_value(&x, T::zero()).unwrap_or(T::one()).abs();
    let mut t = if f_start > T::zero() {
        barrier_start.max(T::one()) / f_start
    } else {
        T::one()
    };
    let abs_floor = f_start * T::lit(1e-14);

    let mut newton_iterations = 0;
    let mut outer_iterations = 0;
    loop {
        outer_iterations += 1;
        // centering
        let mut stage_steps = 0;
        loop {
            if newton_iterations >= settings.max_newton {
                return Err(Error::NotConverged {
                    iterations: newton_iterations,
                    gap: (m / t).as_f64(),
                    last_iterate: x.iter().map(|v| v.as_f64()).collect(),
                });
            }
            newton_iterations += 1;
            stage_steps += 1;
            let (g, h) = prog.barrier_derivatives(&x, t);
            let Some(dx) = newton_direction(&h, &g) else {
                return Err(Error::Singular("barrier Hessian is not positive definite".into()));
            };
            let slope = g.dot(&dx);
            let decrement = -slope / T::lit(2.0);
            if !(decrement > newton_tol) || stage_steps > MAX_STAGE_STEPS {
                break;
            }
            let phi = prog
                .barrier_value(&x, t)
                .expect("iterate stays in the barrier domain");
            let mut step = T::one();
            let mut accepted = false;
            while step > tiny_step {
                let cand = &x + &dx * step;
                if cand == x {
                    break;
                }
                if let Some(v) = prog.barrier_value(&cand, t) {
                    if v <= phi + alpha * step * slope {
                        x = cand;
                        accepted = true;
                        break;
                    }
                }
                step *= beta;
            }
            if !accepted {
                // Armijo test lost to roundoff, or the step no longer moves
                // x: centred as well as floating point allows.
                break;
            }
        }

        let gap = m / t;
        let f = prog.objective.value(&x).abs();
        if gap <= T::lit(settings.gap_rel) * f.max(abs_floor) {
            let barrier_multipliers = prog
                .slacks(&x)
                .expect("final iterate strictly feasible")
                .into_iter()
                .map(|s| T::one() / (t * s))
                .collect::<Vec<_>>();
            let (multipliers, kkt_residual) = prog.refine_multipliers(&x, barrier_multipliers);
            return Ok(Outcome {
                x,
                newton_iterations,
                outer_iterations,
                multipliers,
                gap,
                kkt_residual,
            });
        }
        t *= growth;
    }
}
