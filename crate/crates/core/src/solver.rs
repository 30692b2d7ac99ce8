//! Minimisation of the truncated energies over mean-zero fields and the
//! continuation in the truncation level.
//!
//! The search direction is built in the lumped-mass metric: the steepest
//! direction is `-M^{-1} G`, and the quasi-Newton variant applies the L-BFGS
//! two-loop recursion with initial operator `gamma M^{-1}`. Every direction
//! and every iterate is projected onto mean-zero fields. Steps are accepted
//! by a monotone Armijo test on the exact energy change.

use alloc::boxed::Box;
use alloc::collections::VecDeque;
use alloc::vec::Vec;

use crate::domain::Grid;
use crate::error::Error;
use crate::exponent::{ExponentField, TruncatedExponent};
use crate::field::ScalarField;
use crate::functional::{self, EnergyBreakdown};
use crate::math;

/// Bounds for the Barzilai-Borwein scale of the initial inverse Hessian.
const GAMMA_MIN: f64 = 1e-12;
const GAMMA_MAX: f64 = 1e3;
/// Backtracking gives up once the step falls below this.
const MIN_STEP: f64 = 1e-20;
/// Default relative Cauchy tolerance (times the range of the first solve).
pub const DEFAULT_STOP_REL: f64 = 1e-5;

/// Subtracts the quadrature mean.
pub fn project_mean_zero(grid: &Grid, u: &ScalarField) -> ScalarField {
    let m = u.mean(grid);
    ScalarField::from_vec_unchecked(u.values().iter().map(|v| v - m).collect())
}

fn remove_mass_mean(grid: &Grid, v: &mut [f64]) {
    let mass = grid.lumped_mass();
    let weighted: Vec<f64> = v.iter().zip(mass).map(|(a, m)| a * m).collect();
    let mean = math::pairwise_sum(&weighted) / math::pairwise_sum(mass);
    for a in v.iter_mut() {
        *a -= mean;
    }
}

/// How the search direction is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Mass-scaled steepest descent with a Barzilai-Borwein step.
    SteepestBb,
    /// Limited-memory BFGS keeping `memory` correction pairs.
    Lbfgs { memory: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Stop once the mass-scaled projected gradient is below
    /// `grad_tol * (1 + |I_k|)` in the sup norm.
    pub grad_tol: f64,
    pub max_iters: usize,
    /// Backtracking factor in `(0, 1)`.
    pub ls_shrink: f64,
    /// Sufficient-decrease constant in `(0, 1/2)`.
    pub ls_c1: f64,
    pub direction: Direction,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            grad_tol: 1e-9,
            max_iters: 100_000,
            ls_shrink: 0.5,
            ls_c1: 1e-4,
            direction: Direction::Lbfgs { memory: 10 },
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.grad_tol > 0.0) || !self.grad_tol.is_finite() {
            return Err(Error::InvalidSolverConfig("grad_tol must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidSolverConfig("max_iters must be at least 1"));
        }
        if !(self.ls_shrink > 0.0 && self.ls_shrink < 1.0) {
            return Err(Error::InvalidSolverConfig("ls_shrink must lie in (0, 1)"));
        }
        if !(self.ls_c1 > 0.0 && self.ls_c1 < 0.5) {
            return Err(Error::InvalidSolverConfig("ls_c1 must lie in (0, 1/2)"));
        }
        Ok(())
    }

    fn memory(&self) -> usize {
        match self.direction {
            Direction::SteepestBb => 0,
            Direction::Lbfgs { memory } => memory,
        }
    }
}

/// Minimiser of one truncated energy.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub k: f64,
    pub u: ScalarField,
    pub iterations: usize,
    /// Energy after each accepted step, starting with the initial energy.
    pub energy_trace: Vec<f64>,
    pub grad_norm_final: f64,
    /// `sum w |grad u|^{p_k}` over the whole domain.
    pub modular_bulk: f64,
    pub energy: EnergyBreakdown,
}

/// Sup norm of `G / m` after removing its mass-weighted mean.
fn stationarity(grid: &Grid, grad: &[f64]) -> f64 {
    let mut scaled: Vec<f64> = grad
        .iter()
        .zip(grid.lumped_mass())
        .map(|(g, m)| g / m)
        .collect();
    remove_mass_mean(grid, &mut scaled);
    math::max_abs(&scaled)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let terms: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    math::pairwise_sum(&terms)
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

/// L-BFGS two-loop recursion with initial operator `gamma M^{-1}`;
/// with no stored pairs this is the scaled steepest direction.
fn search_direction(grid: &Grid, grad: &[f64], pairs: &VecDeque<Pair>, gamma: f64) -> Vec<f64> {
    let mass = grid.lumped_mass();
    let mut q = grad.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for pair in pairs.iter().rev() {
        let a = pair.rho * dot(&pair.s, &q);
        for (qi, yi) in q.iter_mut().zip(&pair.y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    let mut r: Vec<f64> = q.iter().zip(mass).map(|(q, m)| gamma * q / m).collect();
    for (pair, a) in pairs.iter().zip(alphas.iter().rev()) {
        let b = pair.rho * dot(&pair.y, &r);
        for (ri, si) in r.iter_mut().zip(&pair.s) {
            *ri += (a - b) * si;
        }
    }
    for ri in r.iter_mut() {
        *ri = -*ri;
    }
    remove_mass_mean(grid, &mut r);
    r
}

/// Minimises `I_k` over mean-zero fields starting from `warm_start`.
pub fn minimize_ik(
    grid: &Grid,
    pk: &TruncatedExponent,
    g: &ScalarField,
    warm_start: &ScalarField,
    cfg: &SolverConfig,
) -> Result<SolveResult, Error> {
    cfg.validate()?;
    if warm_start.len() != grid.node_count() {
        return Err(Error::ShapeMismatch {
            expected: grid.node_count(),
            found: warm_start.len(),
        });
    }
    let mut u = project_mean_zero(grid, warm_start);
    let mut energy = functional::energy_ik(grid, &u, pk, g)?.total;
    let mut grad = functional::energy_gradient(grid, &u, pk, g)?.into_values();
    let mut residual = stationarity(grid, &grad);
    let mut trace = alloc::vec![energy];
    let mut pairs: VecDeque<Pair> = VecDeque::new();
    let memory = cfg.memory();
    let mut gamma = 1.0;
    let mut iterations = 0;

    while residual > cfg.grad_tol * (1.0 + libm::fabs(energy)) {
        if iterations >= cfg.max_iters {
            return Err(Error::NoConvergence {
                iterations,
                residual,
                best: Box::new(u),
            });
        }
        let mut d = search_direction(grid, &grad, &pairs, gamma);
        let mut slope = dot(&grad, &d);
        if !(slope < 0.0) {
            pairs.clear();
            d = search_direction(grid, &grad, &pairs, gamma);
            slope = dot(&grad, &d);
            if !(slope < 0.0) {
                return Err(Error::LineSearchStall {
                    iterations,
                    residual,
                    best: Box::new(u),
                });
            }
        }
        let dir = ScalarField::from_vec_unchecked(d);
        let mut t = 1.0;
        let decrease = loop {
            match functional::energy_change(grid, &u, &dir, t, pk, g) {
                Ok(change) if change <= cfg.ls_c1 * t * slope => break change,
                Ok(_) | Err(Error::ModularOverflow { .. }) => {}
                Err(e) => return Err(e),
            }
            t *= cfg.ls_shrink;
            if t < MIN_STEP {
                return Err(Error::LineSearchStall {
                    iterations,
                    residual,
                    best: Box::new(u),
                });
            }
        };
        let next = project_mean_zero(grid, &u.axpy(t, &dir));
        let next_grad = functional::energy_gradient(grid, &next, pk, g)?.into_values();
        let s: Vec<f64> = next
            .values()
            .iter()
            .zip(u.values())
            .map(|(a, b)| a - b)
            .collect();
        let y: Vec<f64> = next_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 0.0 {
            let y_minv_y: f64 = {
                let terms: Vec<f64> = y
                    .iter()
                    .zip(grid.lumped_mass())
                    .map(|(y, m)| y * y / m)
                    .collect();
                math::pairwise_sum(&terms)
            };
            if y_minv_y > 0.0 {
                gamma = (sy / y_minv_y).clamp(GAMMA_MIN, GAMMA_MAX);
            }
            if memory > 0 {
                if pairs.len() == memory {
                    pairs.pop_front();
                }
                pairs.push_back(Pair {
                    s,
                    y,
                    rho: 1.0 / sy,
                });
            }
        }
        u = next;
        grad = next_grad;
        energy += decrease;
        trace.push(energy);
        residual = stationarity(grid, &grad);
        iterations += 1;
    }

    let breakdown = functional::energy_ik(grid, &u, pk, g)?;
    let modular_bulk = functional::gradient_modular(grid, &u, pk)?;
    Ok(SolveResult {
        k: pk.k(),
        u,
        iterations,
        energy_trace: trace,
        grad_norm_final: residual,
        modular_bulk,
        energy: breakdown,
    })
}

/// Increasing truncation levels and the Cauchy stopping rule.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationSchedule {
    pub k_values: Vec<f64>,
    /// Sup-norm tolerance on successive solutions; `None` means
    /// `1e-5 * (max u - min u)` of the first solve.
    pub stop_tol: Option<f64>,
    /// Stop as soon as a delta falls below the tolerance.
    pub early_stop: bool,
}

impl ContinuationSchedule {
    /// Runs every level in `k_values`.
    pub fn new(k_values: Vec<f64>, stop_tol: Option<f64>) -> Self {
        ContinuationSchedule {
            k_values,
            stop_tol,
            early_stop: false,
        }
    }

    /// `p_plus * 2^j` for `j = 1..=levels`, stopping early once Cauchy.
    pub fn geometric(p_plus: f64, levels: usize) -> Self {
        let k_values = (1..=levels)
            .map(|j| p_plus * libm::ldexp(1.0, j as i32))
            .collect();
        ContinuationSchedule {
            k_values,
            stop_tol: None,
            early_stop: true,
        }
    }

    /// The default schedule up to `4096 p_plus`.
    pub fn default_for(p_plus: f64) -> Self {
        Self::geometric(p_plus, 12)
    }

    pub fn validate(&self, p_plus: f64) -> Result<(), Error> {
        let Some(first) = self.k_values.first() else {
            return Err(Error::InvalidSchedule("no truncation levels"));
        };
        if !(*first > p_plus) {
            return Err(Error::InvalidSchedule("first level must exceed p_plus"));
        }
        if self.k_values.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidSchedule("levels must be strictly increasing"));
        }
        if let Some(t) = self.stop_tol {
            if !(t >= 0.0) {
                return Err(Error::InvalidSchedule("stop_tol must be non-negative"));
            }
        }
        Ok(())
    }

    /// The explicit tolerance, or the default relative to the first solve.
    pub fn resolve_stop_tol(&self, first: &ScalarField) -> f64 {
        self.stop_tol.unwrap_or(DEFAULT_STOP_REL * first.spread())
    }
}

/// Solves every level of the schedule, each warm-started from the last.
pub fn run_continuation(
    grid: &Grid,
    p: &ExponentField,
    g: &ScalarField,
    schedule: &ContinuationSchedule,
    cfg: &SolverConfig,
) -> Result<Vec<SolveResult>, Error> {
    schedule.validate(p.p_plus())?;
    cfg.validate()?;
    let mut results: Vec<SolveResult> = Vec::with_capacity(schedule.k_values.len());
    let mut warm = ScalarField::zeros(grid);
    for &k in &schedule.k_values {
        let at = |e: Error| Error::AtLevel {
            k,
            source: Box::new(e),
        };
        let pk = p.truncate(k).map_err(at)?;
        let res = minimize_ik(grid, &pk, g, &warm, cfg).map_err(at)?;
        warm = res.u.clone();
        results.push(res);
        if schedule.early_stop && results.len() >= 2 {
            let n = results.len();
            let delta = results[n - 1].u.sup_distance(&results[n - 2].u);
            if delta <= schedule.resolve_stop_tol(&results[0].u) {
                break;
            }
        }
    }
    Ok(results)
}

/// The last iterate of a continuation run with its Cauchy diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitResult {
    pub u_inf: ScalarField,
    pub k_final: f64,
    /// `|u_{k_{j+1}} - u_{k_j}|_inf` for consecutive levels.
    pub deltas: Vec<f64>,
    pub stop_tol: f64,
    pub cauchy_ok: bool,
}

/// Whether the last delta is within the tolerance.
pub fn cauchy_ok(deltas: &[f64], stop_tol: f64) -> bool {
    deltas.last().is_some_and(|d| *d <= stop_tol)
}

pub fn extract_limit(
    results: &[SolveResult],
    schedule: &ContinuationSchedule,
) -> Result<LimitResult, Error> {
    if results.len() < 2 {
        return Err(Error::TooFewResults {
            found: results.len(),
        });
    }
    let deltas: Vec<f64> = results
        .windows(2)
        .map(|w| w[1].u.sup_distance(&w[0].u))
        .collect();
    let stop_tol = schedule.resolve_stop_tol(&results[0].u);
    let last = &results[results.len() - 1];
    Ok(LimitResult {
        u_inf: last.u.clone(),
        k_final: last.k,
        cauchy_ok: cauchy_ok(&deltas, stop_tol),
        deltas,
        stop_tol,
    })
}
