//! Convex preamble design: minimum noise-enhancement factor under an OOB
//! cap, or minimum OOB power under a NEF cap.
//!
//! Preambles are real with strictly positive entries on the estimation set.
//! Under that restriction the epigraph/Schur-complement form of the problem
//! is equivalent to a smooth convex program (`Σ P_k⁻²` is convex on the
//! positive orthant, both caps are convex quadratics), which is solved with
//! a log-barrier Newton method. Optimality is certified by the KKT residual
//! reported in [`DesignSolution`].

mod barrier;
mod feasible;

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scalar::{Real, Sample};
use crate::spectral::{FrameConfig, SpectrumOperator};

use barrier::{Func, Program, Settings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Minimise the NEF with total power and OOB power caps.
    MinNef,
    /// Minimise OOB power with total power and NEF caps.
    MinOob,
}

/// Which preamble entries are optimisation variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mask {
    /// Every frequency bin is free.
    Afv,
    /// Only the estimation bins are free; all others are zero.
    Efv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignProblem<T> {
    pub mode: Mode,
    /// Total preamble power budget (linear).
    pub t_p: T,
    /// OOB power cap, required for [`Mode::MinNef`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<T>,
    /// NEF cap, required for [`Mode::MinOob`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi_0: Option<T>,
    pub mask: Mask,
    pub cfg: FrameConfig,
}

impl<T: Real> DesignProblem<T> {
    pub fn min_nef(cfg: FrameConfig, mask: Mask, t_p: T, epsilon: T) -> Self {
        DesignProblem {
            mode: Mode::MinNef,
            t_p,
            epsilon: Some(epsilon),
            xi_0: None,
            mask,
            cfg,
        }
    }

    pub fn min_oob(cfg: FrameConfig, mask: Mask, t_p: T, xi_0: T) -> Self {
        DesignProblem {
            mode: Mode::MinOob,
            t_p,
            epsilon: None,
            xi_0: Some(xi_0),
            mask,
            cfg,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.cfg.validate()?;
        if !(self.t_p > T::zero()) {
            return invalid("t_p must be positive");
        }
        match self.mode {
            Mode::MinNef => match self.epsilon {
                // ε = 0 is well formed; phase-I reports it as infeasible.
                Some(e) if e >= T::zero() => {}
                Some(_) => return invalid("epsilon must be non-negative"),
                None => return invalid("min-nef requires epsilon"),
            },
            Mode::MinOob => match self.xi_0 {
                Some(x) if x > T::zero() => {}
                Some(_) => return invalid("xi_0 must be positive"),
                None => return invalid("min-oob requires xi_0"),
            },
        }
        Ok(())
    }

    /// Indices of the free entries, in preamble order.
    pub fn free_indices(&self) -> Vec<usize> {
        match self.mask {
            Mask::Afv => (0..self.cfg.n).collect(),
            Mask::Efv => {
                let mut k = self.cfg.k_set.clone();
                k.sort_unstable();
                k
            }
        }
    }
}

/// Solved preamble with diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSolution<T> {
    /// Real preamble, length `n`; strictly positive on the estimation set.
    pub preamble: Vec<T>,
    /// `Σ_{k∈K} P_k⁻²` (the epigraph variable satisfies `t_k = 1/P_k`).
    pub nef: T,
    /// `‖S·Z‖²`.
    pub oob_power: T,
    /// `‖P‖²`.
    pub total_power: T,
    /// `oob_power / total_power`.
    pub fractional_oob: T,
    /// Newton steps across all barrier stages.
    pub iterations: usize,
    pub outer_iterations: usize,
    pub converged: bool,
    /// Relative Lagrangian stationarity residual.
    pub kkt_residual: T,
    /// Final duality-gap bound.
    pub duality_gap: T,
    /// Lagrange multipliers of the power cap and, when present, the OOB
    /// (min-nef) or NEF (min-oob) cap.
    pub multipliers: Vec<T>,
    /// Min-NEF solution whose OOB cap does not bind.
    pub oob_inactive: bool,
}

/// Operator and OOB Gram matrix for one frame, reusable across solves.
#[derive(Debug, Clone)]
pub struct DesignContext<T: Real> {
    pub operator: SpectrumOperator<T>,
    gram: DMatrix<T>,
    cfg: FrameConfig,
}

impl<T: Real> DesignContext<T> {
    pub fn new(cfg: &FrameConfig) -> Result<Self> {
        let operator = SpectrumOperator::new(cfg)?;
        let gram = operator.oob_gram();
        Ok(DesignContext {
            operator,
            gram,
            cfg: cfg.clone(),
        })
    }

    /// `‖S·Z‖² = Pᵀ Q P` for real preambles.
    pub fn gram(&self) -> &DMatrix<T> {
        &self.gram
    }

    fn check_frame(&self, problem: &DesignProblem<T>) -> Result<()> {
        let same = problem.cfg.n == self.cfg.n
            && problem.cfg.n_cp == self.cfg.n_cp
            && problem.cfg.l_os == self.cfg.l_os
            && problem.cfg.ramp_len() == self.cfg.ramp_len()
            && problem.cfg.oob_indices == self.cfg.oob_indices;
        if same {
            Ok(())
        } else {
            invalid("problem frame does not match the design context")
        }
    }

    fn reduced(&self, problem: &DesignProblem<T>) -> (Vec<usize>, Vec<usize>, DMatrix<T>) {
        let free = problem.free_indices();
        let positions: Vec<usize> = problem
            .cfg
            .k_set
            .iter()
            .map(|k| free.binary_search(k).expect("k_set ⊆ free"))
            .collect();
        let gram = self.gram.select_rows(free.iter()).select_columns(free.iter());
        (free, positions, gram)
    }

    /// Strictly feasible starting preamble (full length `n`).
    pub fn find_feasible(&self, problem: &DesignProblem<T>) -> Result<Vec<T>> {
        problem.validate()?;
        self.check_frame(problem)?;
        let (free, positions, gram) = self.reduced(problem);
        let x = feasible::start_point(
            problem,
            &gram,
            &positions,
            positivity_floor(problem),
            !gram_is_zero(&gram),
        )?;
        Ok(expand(&x, &free, problem.cfg.n))
    }

    pub fn solve(&self, problem: &DesignProblem<T>) -> Result<DesignSolution<T>> {
        problem.validate()?;
        self.check_frame(problem)?;
        let (free, positions, gram) = self.reduced(problem);
        let floor = positivity_floor(problem);
        let oob_vacuous = gram_is_zero(&gram);
        let x0 = feasible::start_point(problem, &gram, &positions, floor, !oob_vacuous)?;

        let program = match problem.mode {
            Mode::MinNef => {
                let mut constraints = vec![(Func::SquaredNorm, problem.t_p)];
                if !oob_vacuous {
                    constraints.push((
                        Func::Quadratic(gram.clone()),
                        problem.epsilon.expect("validated"),
                    ));
                }
                Program {
                    objective: Func::InverseSquares(positions.clone()),
                    constraints,
                    positive: positions.clone(),
                    floor,
                }
            }
            Mode::MinOob => Program {
                objective: Func::Quadratic(gram.clone()),
                constraints: vec![
                    (Func::SquaredNorm, problem.t_p),
                    (
                        Func::InverseSquares(positions.clone()),
                        problem.xi_0.expect("validated"),
                    ),
                ],
                positive: positions.clone(),
                floor,
            },
        };

        let outcome = barrier::minimize(&program, x0, &Settings::default())?;
        let preamble = expand(&outcome.x, &free, problem.cfg.n);
        let total_power = preamble.iter().fold(T::zero(), |a, &v| a + v * v);
        let oob_power = quad_form(&self.gram, &preamble);
        let nef_value = nef(&preamble, &problem.cfg.k_set)?;
        let oob_inactive = problem.mode == Mode::MinNef
            && (oob_vacuous || {
                let eps = problem.epsilon.expect("validated");
                eps - oob_power > eps * T::lit(1e-6)
            });
        Ok(DesignSolution {
            fractional_oob: oob_power / total_power,
            preamble,
            nef: nef_value,
            oob_power,
            total_power,
            iterations: outcome.newton_iterations,
            outer_iterations: outcome.outer_iterations,
            converged: true,
            kkt_residual: outcome.kkt_residual,
            duality_gap: outcome.gap,
            multipliers: outcome.multipliers,
            oob_inactive,
        })
    }
}

/// Solves a single problem, building the operator on the fly.
pub fn solve<T: Real>(problem: &DesignProblem<T>) -> Result<DesignSolution<T>> {
    problem.validate()?;
    DesignContext::new(&problem.cfg)?.solve(problem)
}

/// Strictly feasible starting preamble for `problem`.
pub fn find_feasible<T: Real>(problem: &DesignProblem<T>) -> Result<Vec<T>> {
    problem.validate()?;
    DesignContext::new(&problem.cfg)?.find_feasible(problem)
}

fn positivity_floor<T: Real>(problem: &DesignProblem<T>) -> T {
    T::lit(1e-8) * (problem.t_p / T::from_usize_lossy(problem.cfg.n)).sqrt()
}

fn gram_is_zero<T: Real>(gram: &DMatrix<T>) -> bool {
    gram.iter().all(|v| v.abs() <= T::lit(1e-13))
}

fn expand<T: Real>(x: &DVector<T>, free: &[usize], n: usize) -> Vec<T> {
    let mut p = vec![T::zero(); n];
    for (i, &f) in free.iter().enumerate() {
        p[f] = x[i];
    }
    p
}

fn quad_form<T: Real>(q: &DMatrix<T>, p: &[T]) -> T {
    let v = DVector::from_column_slice(p);
    v.dot(&(q * &v))
}

/// Noise enhancement factor `Σ_{k∈K} 1/|P_k|²`.
pub fn nef<T: Real, S: Sample<T>>(p: &[S], k_set: &[usize]) -> Result<T> {
    let mut acc = T::zero();
    for &k in k_set {
        let Some(v) = p.get(k) else {
            return invalid(format!("estimation bin {k} outside preamble of length {}", p.len()));
        };
        let pw = v.power();
        if !(pw > T::zero()) {
            return invalid(format!("preamble is zero at estimation bin {k}"));
        }
        acc += T::one() / pw;
    }
    Ok(acc)
}

/// Equal-power preamble: `√(t_p/|K|)` on `k_set`, zero elsewhere.
pub fn equipowered<T: Real>(n: usize, k_set: &[usize], t_p: T) -> Vec<T> {
    let amp = (t_p / T::from_usize_lossy(k_set.len())).sqrt();
    let mut p = vec![T::zero(); n];
    for &k in k_set {
        p[k] = amp;
    }
    p
}

/// Cyclic shift-and-sum of a block preamble:
/// `P_O[i] = Σ_{β=0}^{n_total/m − 1} P[(i − β·m) mod n_total]`.
pub fn juxtapose<T: Real>(block: &[T], m: usize, n_total: usize) -> Result<Vec<T>> {
    if m == 0 || !n_total.is_multiple_of(m) {
        return invalid(format!("block spacing {m} does not divide {n_total}"));
    }
    if block.len() != n_total {
        return invalid(format!(
            "block preamble length {} must equal the full band {n_total}",
            block.len()
        ));
    }
    Ok((0..n_total)
        .map(|i| {
            (0..n_total / m).fold(T::zero(), |acc, beta| {
                acc + block[(i + n_total - (beta * m) % n_total) % n_total]
            })
        })
        .collect())
}

/// Splits an ordered estimation set into its even- and odd-position combs.
pub fn split_comb(k_set: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let even = k_set.iter().step_by(2).copied().collect();
    let odd = k_set.iter().skip(1).step_by(2).copied().collect();
    (even, odd)
}

/// Separately optimised preambles for two disjoint combs. Each solve uses
/// the template with its `k_set` replaced; the OOB region is the template's.
pub fn comb_design<T: Real>(
    template: &DesignProblem<T>,
    k1: &[usize],
    k2: &[usize],
) -> Result<(DesignSolution<T>, DesignSolution<T>)> {
    if k1.iter().any(|k| k2.contains(k)) {
        return invalid("comb sets overlap");
    }
    if template.mask != Mask::Efv {
        return invalid("comb preambles need the EFV mask to keep supports disjoint");
    }
    let ctx = DesignContext::new(&template.cfg)?;
    let mut p1 = template.clone();
    p1.cfg = p1.cfg.with_k_set(k1.to_vec())?;
    let mut p2 = template.clone();
    p2.cfg = p2.cfg.with_k_set(k2.to_vec())?;
    Ok((ctx.solve(&p1)?, ctx.solve(&p2)?))
}

/// One row of the empirical complexity table.
#[derive(Debug, Clone, Serialize)]
pub struct ComplexityRow {
    pub mask: Mask,
    pub n: usize,
    pub free_variables: usize,
    pub newton_iterations: usize,
    pub outer_iterations: usize,
    pub seconds: f64,
}

/// Solve statistics for growing `n` with a fixed, centred estimation block
/// of `block` bins. Diagnostic only.
pub fn complexity_probe(
    mask: Mask,
    n_values: &[usize],
    block: usize,
    template: &DesignProblem<f64>,
) -> Result<Vec<ComplexityRow>> {
    let mut rows = Vec::with_capacity(n_values.len());
    for &n in n_values {
        if block == 0 || block > n {
            return invalid(format!("block of {block} bins does not fit n = {n}"));
        }
        let start = n / 2 - block / 2;
        let k_set: Vec<usize> = (start..start + block).collect();
        let base = &template.cfg;
        let cfg = FrameConfig::new(
            n,
            base.n_cp.min(n),
            base.l_w,
            base.l_os,
            base.pinching_enabled,
            k_set,
        )?;
        let mut problem = template.clone();
        problem.cfg = cfg;
        problem.mask = mask;
        let free_variables = problem.free_indices().len();
        let clock = Instant::now();
        let sol = solve(&problem)?;
        rows.push(ComplexityRow {
            mask,
            n,
            free_variables,
            newton_iterations: sol.iterations,
            outer_iterations: sol.outer_iterations,
            seconds: clock.elapsed().as_secs_f64(),
        });
    }
    Ok(rows)
}
