//! Constrained NLP solver for the single-shooting transcriptions.
//!
//! Solves `min f(x)` subject to `c_i(x) <= 0` and box bounds with a
//! Powell-Hestenes-Rockafellar augmented Lagrangian. Each outer iteration
//! minimizes
//!
//! ```text
//! L(x; lambda, rho) = f(x) + 1/(2 rho) * sum_i ( max(0, lambda_i + rho c_i(x))^2 - lambda_i^2 )
//! ```
//!
//! over the box with projected BFGS, then updates the multipliers.

mod bfgs;
mod fd;

pub use fd::finite_diff_gradient;

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use serde::Serialize;
use thiserror::Error;

type ValueFn = dyn Fn(&DVector<f64>) -> f64 + Send + Sync;
type GradientFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;

const MAX_PENALTY: f64 = 1e12;
const MONOTONE_SLACK: f64 = 1e-12;
const MONOTONE_RETRIES: usize = 4;
const STOP_MARGIN: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("initial guess has dimension {got}, problem has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cost is not finite at the initial guess")]
    NonFiniteInitialCost,
    #[error("non-finite function value during finite differencing (coordinate {coordinate:?})")]
    NonFiniteEvaluation { coordinate: Option<usize> },
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
}

/// Scalar function with an optional analytic gradient.
#[derive(Clone)]
pub struct ScalarFunction {
    value: Arc<ValueFn>,
    gradient: Option<Arc<GradientFn>>,
}

impl ScalarFunction {
    pub fn new<F>(value: F) -> Self
    where
        F: Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
    {
        Self { value: Arc::new(value), gradient: None }
    }

    pub fn with_gradient<G>(mut self, gradient: G) -> Self
    where
        G: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        self.gradient = Some(Arc::new(gradient));
        self
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        (self.value)(x)
    }

    pub fn has_analytic_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    pub fn analytic_gradient(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        self.gradient.as_ref().map(|g| g(x))
    }

    /// Analytic gradient if present, central differences otherwise.
    pub fn gradient(&self, x: &DVector<f64>, fd_step: f64) -> Result<DVector<f64>, SolverError> {
        match &self.gradient {
            Some(g) => Ok(g(x)),
            None => finite_diff_gradient(|v| self.value(v), x, fd_step),
        }
    }
}

impl fmt::Debug for ScalarFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarFunction")
            .field("analytic_gradient", &self.gradient.is_some())
            .finish()
    }
}

/// `min cost(x)` s.t. `constraints[i](x) <= 0`, `lower <= x <= upper`.
#[derive(Debug, Clone)]
pub struct NlpProblem {
    pub dim: usize,
    pub cost: ScalarFunction,
    pub constraints: Vec<ScalarFunction>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl NlpProblem {
    pub fn new(dim: usize, cost: ScalarFunction) -> Self {
        Self {
            dim,
            cost,
            constraints: Vec::new(),
            lower: DVector::from_element(dim, f64::NEG_INFINITY),
            upper: DVector::from_element(dim, f64::INFINITY),
        }
    }

    pub fn with_constraint(mut self, c: ScalarFunction) -> Self {
        self.constraints.push(c);
        self
    }

    pub fn with_bounds(mut self, lower: DVector<f64>, upper: DVector<f64>) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    pub fn has_bounds(&self) -> bool {
        self.lower.iter().chain(self.upper.iter()).any(|b| b.is_finite())
    }

    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        bfgs::Bounds { lower: &self.lower, upper: &self.upper }.project(x)
    }

    /// `max(0, c_i(x))` for every constraint.
    pub fn residuals(&self, x: &DVector<f64>) -> Vec<f64> {
        self.constraints
            .iter()
            .map(|c| {
                let v = c.value(x);
                if v.is_nan() {
                    f64::INFINITY
                } else {
                    v.max(0.0)
                }
            })
            .collect()
    }

    pub fn max_residual(&self, x: &DVector<f64>) -> f64 {
        self.residuals(x).into_iter().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverConfig {
    pub feasibility_tol: f64,
    /// Projected-gradient stationarity tolerance, relative to `max(1, |L|)`.
    pub optimality_tol: f64,
    pub max_outer_iters: usize,
    pub max_inner_iters: usize,
    pub initial_penalty: f64,
    pub penalty_growth: f64,
    /// Relative finite-difference step.
    pub fd_step: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-6,
            optimality_tol: 1e-8,
            max_outer_iters: 50,
            max_inner_iters: 200,
            initial_penalty: 10.0,
            penalty_growth: 10.0,
            fd_step: 1e-6,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let positive = [
            ("feasibility_tol", self.feasibility_tol),
            ("optimality_tol", self.optimality_tol),
            ("initial_penalty", self.initial_penalty),
            ("fd_step", self.fd_step),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(SolverError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.penalty_growth.is_finite() && self.penalty_growth > 1.0) {
            return Err(SolverError::InvalidConfig(format!(
                "penalty_growth must exceed 1, got {}",
                self.penalty_growth
            )));
        }
        if self.max_outer_iters == 0 || self.max_inner_iters == 0 {
            return Err(SolverError::InvalidConfig("iteration limits must be positive".into()));
        }
        Ok(())
    }

    /// All tolerances scaled by `factor`.
    pub fn tightened(&self, factor: f64) -> Self {
        Self {
            feasibility_tol: self.feasibility_tol * factor,
            optimality_tol: self.optimality_tol * factor,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    FeasibleSuboptimal,
    Infeasible,
    MaxIters,
}

impl SolveStatus {
    /// Whether the solution satisfies the constraints within tolerance.
    pub fn is_usable(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::FeasibleSuboptimal)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::FeasibleSuboptimal => "feasible_suboptimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::MaxIters => "max_iters",
        }
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub outer: usize,
    pub cost: f64,
    pub max_residual: f64,
    pub penalty: f64,
    pub inner_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverResult {
    pub solution: DVector<f64>,
    pub cost_value: f64,
    pub constraint_residuals: Vec<f64>,
    pub multipliers: Vec<f64>,
    pub status: SolveStatus,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub trace: Vec<IterationRecord>,
}

impl SolverResult {
    pub fn max_residual(&self) -> f64 {
        self.constraint_residuals.iter().copied().fold(0.0, f64::max)
    }
}

struct Lagrangian<'a> {
    problem: &'a NlpProblem,
    multipliers: &'a [f64],
    penalty: f64,
    fd_step: f64,
}

impl Lagrangian<'_> {
    fn value(&self, x: &DVector<f64>) -> f64 {
        let mut v = self.problem.cost.value(x);
        for (c, &lambda) in self.problem.constraints.iter().zip(self.multipliers) {
            let shifted = (lambda + self.penalty * c.value(x)).max(0.0);
            v += (shifted * shifted - lambda * lambda) / (2.0 * self.penalty);
        }
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }

    fn gradient(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        let mut g = self.problem.cost.gradient(x, self.fd_step).ok()?;
        for (c, &lambda) in self.problem.constraints.iter().zip(self.multipliers) {
            let shifted = (lambda + self.penalty * c.value(x)).max(0.0);
            if shifted > 0.0 {
                g += shifted * c.gradient(x, self.fd_step).ok()?;
            }
        }
        if g.iter().all(|v| v.is_finite()) {
            Some(g)
        } else {
            None
        }
    }
}

/// Solves `problem` from `initial_guess` (projected onto the box first).
///
/// If the guess is feasible, the returned cost never exceeds the cost of the
/// guess by more than `optimality_tol`.
pub fn solve(problem: &NlpProblem, config: &SolverConfig, initial_guess: &DVector<f64>) -> Result<SolverResult, SolverError> {
    config.validate()?;
    if initial_guess.len() != problem.dim {
        return Err(SolverError::DimensionMismatch { expected: problem.dim, got: initial_guess.len() });
    }
    let bounds = bfgs::Bounds { lower: &problem.lower, upper: &problem.upper };
    let guess = bounds.project(initial_guess);
    let guess_cost = problem.cost.value(&guess);
    if !guess_cost.is_finite() {
        return Err(SolverError::NonFiniteInitialCost);
    }
    let guess_residual = problem.max_residual(&guess);

    let m = problem.constraints.len();
    let mut multipliers = vec![0.0; m];
    let mut penalty = config.initial_penalty;
    let mut x = guess.clone();
    let mut trace = Vec::new();
    let mut inner_total = 0;
    let mut prev_residual = f64::INFINITY;
    let mut best = (guess_residual, guess.clone());
    let mut status = None;
    let mut outer = 0;

    while outer < config.max_outer_iters {
        outer += 1;
        let mut attempt = 0;
        let (candidate, converged, residual, inner_iters) = loop {
            let lagrangian = Lagrangian { problem, multipliers: &multipliers, penalty, fd_step: config.fd_step };
            let inner = bfgs::minimize(
                |v| lagrangian.value(v),
                |v| lagrangian.gradient(v),
                &x,
                &bounds,
                config.max_inner_iters,
                config.optimality_tol,
            );
            inner_total += inner.iterations;
            log::trace!(
                "outer {outer}: inner value {:e}, stationarity {:e} after {} iterations",
                inner.value,
                inner.stationarity,
                inner.iterations
            );
            let residual = problem.max_residual(&inner.x);
            attempt += 1;
            let regressed = residual > prev_residual + MONOTONE_SLACK;
            if regressed && attempt <= MONOTONE_RETRIES && penalty < MAX_PENALTY {
                penalty = (penalty * config.penalty_growth).min(MAX_PENALTY);
                continue;
            }
            break (inner.x, inner.converged, residual, inner.iterations);
        };
        x = candidate;
        if residual < best.0 {
            best = (residual, x.clone());
        }

        let values: Vec<f64> = problem.constraints.iter().map(|c| c.value(&x)).collect();
        let complementarity = values
            .iter()
            .zip(&multipliers)
            .map(|(c, lambda)| c.max(-lambda / penalty).abs())
            .fold(0.0, f64::max);
        for (lambda, c) in multipliers.iter_mut().zip(&values) {
            *lambda = (*lambda + penalty * c).max(0.0);
        }
        trace.push(IterationRecord {
            outer,
            cost: problem.cost.value(&x),
            max_residual: residual,
            penalty,
            inner_iterations: inner_iters,
        });

        // stopping with a margin keeps the primal error, not just the
        // residual, at the tolerance scale
        let target = STOP_MARGIN * config.feasibility_tol;
        if residual <= target && converged && complementarity <= target {
            status = Some(SolveStatus::Optimal);
            break;
        }
        if residual > target && residual > 0.25 * prev_residual {
            penalty = (penalty * config.penalty_growth).min(MAX_PENALTY);
        }
        prev_residual = prev_residual.min(residual);
    }

    let mut solution = x;
    let mut status = status.unwrap_or_else(|| {
        if problem.max_residual(&solution) <= config.feasibility_tol {
            SolveStatus::FeasibleSuboptimal
        } else if penalty >= MAX_PENALTY {
            SolveStatus::Infeasible
        } else {
            SolveStatus::MaxIters
        }
    });
    if !status.is_usable() {
        solution = best.1;
    }
    if guess_residual <= config.feasibility_tol {
        // improvements below the tolerance do not justify leaving the guess
        let no_gain = problem.cost.value(&solution) >= guess_cost - config.optimality_tol;
        if !status.is_usable() || no_gain {
            solution = guess;
            status = SolveStatus::FeasibleSuboptimal;
        }
    }
    Ok(SolverResult {
        cost_value: problem.cost.value(&solution),
        constraint_residuals: problem.residuals(&solution),
        solution,
        multipliers,
        status,
        outer_iterations: outer,
        inner_iterations: inner_total,
        trace,
    })
}
