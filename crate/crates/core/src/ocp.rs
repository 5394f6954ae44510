//! Single-shooting transcriptions of the three optimal control problems.
//!
//! The decision vector is the stacked input sequence; states are recomputed
//! by rolling out the nominal model, so the dynamics hold by construction.
//! Every variant minimizes `sum_{i=0}^{H-1} V(x(i))` over horizon `H`. The
//! contractive variants add `V(x(H)) <= alpha(anchor)`, with `anchor = V(xi)`
//! for the multi-step problem and the cycle-start value for the shrinking
//! one.

use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::model::{rollout, ControlSequence, ControlSystem, FsClf, ModelError, Trajectory};
use crate::solver::{self, NlpProblem, ScalarFunction, SolveStatus, SolverConfig, SolverError, SolverResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OcpError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("initial state is outside the state constraint set")]
    InitialStateInfeasible,
    #[error("horizon {horizon} outside 1..={max}")]
    HorizonOutOfRange { horizon: usize, max: usize },
    #[error("invalid problem data: {0}")]
    Invalid(String),
    #[error("optimal control problem infeasible (max residual {max_residual:e}, contraction residual {contraction_residual:e})")]
    Infeasible {
        max_residual: f64,
        contraction_residual: f64,
        best: Box<OcpSolution>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OcpVariant {
    /// Multi-step problem with horizon `steps = M`, anchored at `V(xi)`.
    Contractive { steps: usize },
    /// Shrinking-horizon problem with `horizon = j` and the cycle-start value
    /// `anchor_value` of `V`.
    Shrinking { horizon: usize, anchor_value: f64 },
    /// Fixed-horizon problem without contraction constraint.
    Classic { horizon: usize },
}

impl OcpVariant {
    pub fn horizon(&self) -> usize {
        match *self {
            OcpVariant::Contractive { steps } => steps,
            OcpVariant::Shrinking { horizon, .. } | OcpVariant::Classic { horizon } => horizon,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OcpSpec {
    pub variant: OcpVariant,
    /// Prediction model; any disturbance is stripped.
    pub system: ControlSystem,
    pub fsclf: FsClf,
    pub initial_state: DVector<f64>,
    /// Bookkeeping only; predictions are time invariant.
    pub initial_time: usize,
}

impl OcpSpec {
    pub fn new(variant: OcpVariant, system: &ControlSystem, fsclf: &FsClf, initial_state: DVector<f64>) -> Self {
        Self {
            variant,
            system: system.nominal(),
            fsclf: fsclf.clone(),
            initial_state,
            initial_time: 0,
        }
    }

    pub fn at_time(mut self, t: usize) -> Self {
        self.initial_time = t;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcpSolution {
    pub controls: ControlSequence,
    pub predicted: Trajectory,
    pub cost: f64,
    /// `max(0, V(x(H)) - alpha(anchor))`; 0 for the classic problem.
    pub contraction_residual: f64,
    pub status: SolveStatus,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub solver: SolverResult,
}

/// Rollout and adjoint machinery shared by the cost and constraint closures.
struct Shooting {
    system: ControlSystem,
    fsclf: FsClf,
    initial: DVector<f64>,
    input_dim: usize,
    analytic: bool,
    /// Last rollout; cost and constraints are evaluated at the same point in
    /// turn, so one entry removes almost all repeated simulations.
    cache: Mutex<Option<(DVector<f64>, Arc<Trajectory>)>>,
}

impl Shooting {
    fn new(spec: &OcpSpec) -> Self {
        let n = spec.system.state_dim();
        let m = spec.system.input_dim();
        let analytic = spec.fsclf.gradient(&DVector::zeros(n)).is_some()
            && spec
                .system
                .dynamics()
                .jacobians(&DVector::zeros(n), &DVector::zeros(m))
                .is_some();
        Self {
            system: spec.system.nominal(),
            fsclf: spec.fsclf.clone(),
            initial: spec.initial_state.clone(),
            input_dim: m,
            analytic,
            cache: Mutex::new(None),
        }
    }

    fn states(&self, u: &DVector<f64>) -> Option<Arc<Trajectory>> {
        let mut cache = self.cache.lock().unwrap_or_else(|e| e.into_inner());
        if let Some((key, traj)) = cache.as_ref() {
            if key == u {
                return Some(Arc::clone(traj));
            }
        }
        let seq = ControlSequence::from_flat(self.input_dim, u.as_slice()).ok()?;
        let traj = Arc::new(rollout(&self.system, &self.initial, &seq, 0).ok()?);
        *cache = Some((u.clone(), Arc::clone(&traj)));
        Some(traj)
    }

    fn stage_cost(&self, traj: &Trajectory) -> f64 {
        traj.states[..traj.len()].iter().map(|x| self.fsclf.value(x)).sum()
    }

    /// Gradient of `sum_k w_k . x(k)` (with state-dependent weights supplied
    /// per step) with respect to the stacked inputs, by a backward sweep.
    fn adjoint(&self, traj: &Trajectory, weight: impl Fn(usize, &DVector<f64>) -> Option<DVector<f64>>) -> DVector<f64> {
        let h = traj.len();
        let m = self.input_dim;
        let n = self.system.state_dim();
        let mut grad = DVector::zeros(h * m);
        let mut costate = weight(h, &traj.states[h]).unwrap_or_else(|| DVector::zeros(n));
        for i in (0..h).rev() {
            let (a, b): (DMatrix<f64>, DMatrix<f64>) = self
                .system
                .dynamics()
                .jacobians(&traj.states[i], &traj.inputs[i])
                .expect("analytic path requires Jacobians");
            grad.rows_mut(i * m, m).copy_from(&(b.transpose() * &costate));
            let mut next = a.transpose() * &costate;
            if let Some(w) = weight(i, &traj.states[i]) {
                next += w;
            }
            costate = next;
        }
        grad
    }
}

fn validate(spec: &OcpSpec) -> Result<(), OcpError> {
    let n = spec.system.state_dim();
    if spec.initial_state.len() != n {
        return Err(ModelError::DimensionMismatch { what: "initial state", expected: n, got: spec.initial_state.len() }.into());
    }
    if let Some(vn) = spec.fsclf.state_dim() {
        if vn != n {
            return Err(ModelError::DimensionMismatch { what: "fs-CLF state dimension", expected: n, got: vn }.into());
        }
    }
    if spec.initial_state.iter().any(|v| !v.is_finite()) {
        return Err(OcpError::Invalid("initial state must be finite".into()));
    }
    if !spec.system.state_set.contains(&spec.initial_state, 0.0) {
        return Err(OcpError::InitialStateInfeasible);
    }
    Ok(())
}

/// Contraction target `alpha(anchor)` for contractive variants.
fn contraction_target(spec: &OcpSpec) -> Result<Option<f64>, OcpError> {
    match spec.variant {
        OcpVariant::Contractive { steps } => {
            if steps == 0 || steps != spec.fsclf.steps {
                return Err(OcpError::Invalid(format!(
                    "contractive horizon {steps} must equal the fs-CLF step count {}",
                    spec.fsclf.steps
                )));
            }
            Ok(Some(spec.fsclf.decay_target(spec.fsclf.value(&spec.initial_state))))
        }
        OcpVariant::Shrinking { horizon, anchor_value } => {
            if horizon == 0 || horizon > spec.fsclf.steps {
                return Err(OcpError::HorizonOutOfRange { horizon, max: spec.fsclf.steps });
            }
            if !(anchor_value.is_finite() && anchor_value >= 0.0) {
                return Err(OcpError::Invalid(format!("anchor value must be nonnegative, got {anchor_value}")));
            }
            Ok(Some(spec.fsclf.decay_target(anchor_value)))
        }
        OcpVariant::Classic { horizon } => {
            if horizon == 0 {
                return Err(OcpError::HorizonOutOfRange { horizon, max: usize::MAX });
            }
            Ok(None)
        }
    }
}

fn build(spec: &OcpSpec) -> Result<(NlpProblem, Option<f64>), OcpError> {
    validate(spec)?;
    let target = contraction_target(spec)?;
    let horizon = spec.variant.horizon();
    let m = spec.system.input_dim();
    let shooting = Arc::new(Shooting::new(spec));

    let cost = {
        let s = Arc::clone(&shooting);
        let f = ScalarFunction::new(move |u| s.states(u).map_or(f64::INFINITY, |t| s.stage_cost(&t)));
        if shooting.analytic {
            let s = Arc::clone(&shooting);
            f.with_gradient(move |u| {
                let traj = s.states(u).expect("gradient requested at a finite point");
                let h = traj.len();
                s.adjoint(&traj, |k, x| if k < h { s.fsclf.gradient(x) } else { None })
            })
        } else {
            f
        }
    };
    let mut problem = NlpProblem::new(horizon * m, cost);

    if let Some(target) = target {
        let s = Arc::clone(&shooting);
        let mut c = ScalarFunction::new(move |u| {
            s.states(u).map_or(f64::INFINITY, |t| s.fsclf.value(t.final_state()) - target)
        });
        if shooting.analytic {
            let s = Arc::clone(&shooting);
            c = c.with_gradient(move |u| {
                let traj = s.states(u).expect("gradient requested at a finite point");
                let h = traj.len();
                s.adjoint(&traj, |k, x| if k == h { s.fsclf.gradient(x) } else { None })
            });
        }
        problem = problem.with_constraint(c);
    }

    // x(1..=H) in the state set, one inequality per finite bound
    let n = spec.system.state_dim();
    let probe = DVector::zeros(n);
    for step in 1..=horizon {
        for (slot, (component, sign, _)) in spec.system.state_set.signed_violations(&probe).into_iter().enumerate() {
            let s = Arc::clone(&shooting);
            let mut c = ScalarFunction::new(move |u| {
                s.states(u)
                    .map_or(f64::INFINITY, |t| s.system.state_set.signed_violations(&t.states[step])[slot].2)
            });
            if shooting.analytic {
                let s = Arc::clone(&shooting);
                c = c.with_gradient(move |u| {
                    let traj = s.states(u).expect("gradient requested at a finite point");
                    s.adjoint(&traj, |k, _| {
                        (k == step).then(|| {
                            let mut w = DVector::zeros(n);
                            w[component] = sign;
                            w
                        })
                    })
                });
            }
            problem = problem.with_constraint(c);
        }
    }

    if let crate::model::ConstraintSet::Box { lower, upper } = &spec.system.input_set {
        let lo = DVector::from_iterator(horizon * m, (0..horizon).flat_map(|_| lower.iter().copied()));
        let hi = DVector::from_iterator(horizon * m, (0..horizon).flat_map(|_| upper.iter().copied()));
        problem = problem.with_bounds(lo, hi);
    }
    Ok((problem, target))
}

/// Multi-step contractive problem: horizon `M`, constraint
/// `V(x(M)) <= alpha(V(xi))`.
pub fn build_ocp1(spec: &OcpSpec) -> Result<NlpProblem, OcpError> {
    match spec.variant {
        OcpVariant::Contractive { .. } => Ok(build(spec)?.0),
        _ => Err(OcpError::Invalid("build_ocp1 expects a contractive variant".into())),
    }
}

/// Shrinking-horizon problem: horizon `j`, constraint
/// `V(x(j)) <= alpha(anchor_value)`.
pub fn build_ocp2(spec: &OcpSpec) -> Result<NlpProblem, OcpError> {
    match spec.variant {
        OcpVariant::Shrinking { .. } => Ok(build(spec)?.0),
        _ => Err(OcpError::Invalid("build_ocp2 expects a shrinking variant".into())),
    }
}

/// Classic problem: horizon `N`, no contraction constraint.
pub fn build_ocp3(spec: &OcpSpec) -> Result<NlpProblem, OcpError> {
    match spec.variant {
        OcpVariant::Classic { .. } => Ok(build(spec)?.0),
        _ => Err(OcpError::Invalid("build_ocp3 expects a classic variant".into())),
    }
}

pub fn build_ocp(spec: &OcpSpec) -> Result<NlpProblem, OcpError> {
    Ok(build(spec)?.0)
}

/// Builds, solves and rolls out. `warm_start` seeds the solver; zeros are used
/// otherwise.
pub fn solve_ocp(spec: &OcpSpec, config: &SolverConfig, warm_start: Option<&ControlSequence>) -> Result<OcpSolution, OcpError> {
    let (problem, target) = build(spec)?;
    let horizon = spec.variant.horizon();
    let m = spec.system.input_dim();
    let guess = match warm_start {
        Some(ws) => {
            if ws.len() != horizon || ws.input_dim() != m {
                return Err(OcpError::Invalid(format!(
                    "warm start has {} inputs of dimension {}, expected {horizon} of dimension {m}",
                    ws.len(),
                    ws.input_dim()
                )));
            }
            ws.to_flat()
        }
        None => DVector::zeros(horizon * m),
    };
    let result = solver::solve(&problem, config, &guess)?;
    let controls = ControlSequence::from_flat(m, result.solution.as_slice())?;
    let predicted = rollout(&spec.system, &spec.initial_state, &controls, spec.initial_time)?;
    let cost = predicted.states[..horizon].iter().map(|x| spec.fsclf.value(x)).sum();
    let contraction_residual = match target {
        Some(target) => (spec.fsclf.value(predicted.final_state()) - target).max(0.0),
        None => 0.0,
    };
    let solution = OcpSolution {
        controls,
        predicted,
        cost,
        contraction_residual,
        status: result.status,
        outer_iterations: result.outer_iterations,
        inner_iterations: result.inner_iterations,
        solver: result,
    };
    if !solution.status.is_usable() {
        return Err(OcpError::Infeasible {
            max_residual: solution.solver.max_residual(),
            contraction_residual,
            best: Box::new(solution),
        });
    }
    Ok(solution)
}

/// Optimal value `V_N(xi)` of the classic problem.
pub fn optimal_value_vn(
    system: &ControlSystem,
    fsclf: &FsClf,
    xi: &DVector<f64>,
    horizon: usize,
    config: &SolverConfig,
) -> Result<f64, OcpError> {
    let spec = OcpSpec::new(OcpVariant::Classic { horizon }, system, fsclf, xi.clone());
    Ok(solve_ocp(&spec, config, None)?.cost)
}

/// `min V(x(horizon))` over the inputs: the best contraction reachable from
/// `xi`, used to grade fs-CLF candidates.
pub fn best_terminal_value(
    system: &ControlSystem,
    fsclf: &FsClf,
    xi: &DVector<f64>,
    horizon: usize,
    config: &SolverConfig,
) -> Result<(f64, SolverResult), OcpError> {
    let spec = OcpSpec::new(OcpVariant::Classic { horizon }, system, fsclf, xi.clone());
    validate(&spec)?;
    if horizon == 0 {
        return Err(OcpError::HorizonOutOfRange { horizon, max: usize::MAX });
    }
    let shooting = Arc::new(Shooting::new(&spec));
    let s = Arc::clone(&shooting);
    let mut cost = ScalarFunction::new(move |u| s.states(u).map_or(f64::INFINITY, |t| s.fsclf.value(t.final_state())));
    if shooting.analytic {
        let s = Arc::clone(&shooting);
        cost = cost.with_gradient(move |u| {
            let traj = s.states(u).expect("gradient requested at a finite point");
            let h = traj.len();
            s.adjoint(&traj, |k, x| if k == h { s.fsclf.gradient(x) } else { None })
        });
    }
    let mut problem = NlpProblem::new(horizon * system.input_dim(), cost);
    if let crate::model::ConstraintSet::Box { lower, upper } = &system.input_set {
        let m = system.input_dim();
        let lo = DVector::from_iterator(horizon * m, (0..horizon).flat_map(|_| lower.iter().copied()));
        let hi = DVector::from_iterator(horizon * m, (0..horizon).flat_map(|_| upper.iter().copied()));
        problem = problem.with_bounds(lo, hi);
    }
    let result = solver::solve(&problem, config, &DVector::zeros(problem.dim))?;
    Ok((result.cost_value, result))
}
