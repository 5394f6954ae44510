//! Closed-loop MPC drivers.
//!
//! A scheme decides, from the measured state, which inputs to apply next. The
//! driver owns the plant simulation: it queries the scheme whenever its input
//! queue runs dry, so a multi-step scheme is consulted once per cycle and the
//! per-step schemes at every sample. Schemes are created by name from a
//! [`SchemeRegistry`].

mod classic;
mod multistep;
mod registry;
mod shrinking;

pub use classic::ClassicScheme;
pub use multistep::MultiStepScheme;
pub use registry::{SchemeFactory, SchemeInfo, SchemeRegistry};
pub use shrinking::ShrinkingScheme;

use std::collections::VecDeque;
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ControlSequence, ControlSystem, FsClf, ModelError, Trajectory};
use crate::ocp::{solve_ocp, OcpError, OcpSolution, OcpSpec};
use crate::solver::{SolveStatus, SolverConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MpcError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("optimal control problem infeasible at t={time} (cycle {cycle}, offset {offset}), residual {residual:e}")]
    Infeasible {
        time: usize,
        cycle: usize,
        offset: usize,
        residual: f64,
    },
    #[error("solve failed at t={time}: {source}")]
    Ocp { time: usize, source: OcpError },
    #[error("unknown MPC scheme `{0}`")]
    UnknownScheme(String),
    #[error("invalid closed-loop configuration: {0}")]
    InvalidConfig(String),
}

/// Built-in schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Solve the contractive problem every `M` steps, apply the whole sequence.
    MultiStep,
    /// Re-solve on shrinking horizons `M, M-1, ..., 1` within each cycle.
    ShrinkingUpdated,
    /// Fixed horizon every step, first input only.
    Classic,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::MultiStep, Algorithm::ShrinkingUpdated, Algorithm::Classic];

    /// Registry key.
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::MultiStep => "multi-step",
            Algorithm::ShrinkingUpdated => "shrinking-updated",
            Algorithm::Classic => "classic",
        }
    }

    pub fn is_contractive(self) -> bool {
        !matches!(self, Algorithm::Classic)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WarmStartPolicy {
    Zeros,
    /// Reuse the unapplied tail of the previous solution (padded with zeros
    /// for fixed horizons).
    #[default]
    ShiftPrevious,
}

/// What a driver does when a solve stays infeasible after the relaxed retry.
///
/// Infeasibility is only possible under disturbance (or with tight state and
/// input sets); whichever policy is chosen, every fallback is recorded in the
/// solve diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InfeasibilityPolicy {
    /// Abort the run with [`MpcError::Infeasible`].
    #[default]
    Error,
    /// Shrinking scheme only: open a new cycle at the measured state and solve
    /// the full contractive problem there. Other schemes treat this as `Error`.
    RestartCycle,
    /// Apply the solver's least-violating iterate.
    BestEffort,
}

/// How a recorded solve deviated from the plain algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fallback {
    /// A new cycle was opened early because the shrinking problem was infeasible.
    RestartedCycle,
    /// An infeasible iterate was applied.
    BestEffort,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopConfig {
    /// Registry name of the scheme.
    pub scheme: String,
    /// `M` for the contractive schemes, `N` for the classic one.
    pub horizon: usize,
    pub total_steps: usize,
    pub solver: SolverConfig,
    pub warm_start: WarmStartPolicy,
    pub on_infeasible: InfeasibilityPolicy,
}

impl ClosedLoopConfig {
    pub fn new(algorithm: Algorithm, horizon: usize, total_steps: usize) -> Self {
        Self {
            scheme: algorithm.name().to_string(),
            horizon,
            total_steps,
            solver: SolverConfig::default(),
            warm_start: WarmStartPolicy::default(),
            on_infeasible: InfeasibilityPolicy::default(),
        }
    }

    pub fn with_infeasibility_policy(mut self, policy: InfeasibilityPolicy) -> Self {
        self.on_infeasible = policy;
        self
    }

    pub fn with_solver(mut self, solver: SolverConfig) -> Self {
        self.solver = solver;
        self
    }

    pub fn validate(&self) -> Result<(), MpcError> {
        if self.total_steps == 0 {
            return Err(MpcError::InvalidConfig("total_steps must be at least 1".into()));
        }
        if self.horizon == 0 {
            return Err(MpcError::InvalidConfig("horizon must be at least 1".into()));
        }
        self.solver
            .validate()
            .map_err(|e| MpcError::InvalidConfig(e.to_string()))
    }
}

/// Diagnostics for one optimal control solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveRecord {
    pub time: usize,
    pub cycle: usize,
    /// Position inside the cycle (`t - kM`); 0 for the classic scheme.
    pub offset: usize,
    pub horizon: usize,
    pub status: SolveStatus,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub cost: f64,
    pub contraction_residual: f64,
    pub wall_time_secs: f64,
    /// State the problem was posed at; always the measured plant state.
    pub initial_state: DVector<f64>,
    /// Cycle-start value `V(x(kM))` when this solve opened a cycle.
    pub anchor: Option<f64>,
    /// Whether the relaxed retry was needed.
    pub retried: bool,
    pub fallback: Option<Fallback>,
}

/// Inputs a scheme commits to, plus the diagnostics of the solve.
#[derive(Debug, Clone)]
pub struct Plan {
    pub inputs: Vec<DVector<f64>>,
    pub record: SolveRecord,
}

/// What a scheme may use to decide.
pub struct SchemeContext<'a> {
    pub model: &'a ControlSystem,
    pub fsclf: &'a FsClf,
    pub solver: &'a SolverConfig,
    pub warm_start: WarmStartPolicy,
    pub on_infeasible: InfeasibilityPolicy,
}

/// One MPC strategy. Implementations keep per-run state (anchors, previous
/// solutions) and are created fresh for every run.
pub trait MpcScheme: Send {
    fn name(&self) -> &str;

    fn horizon(&self) -> usize;

    /// Called by the driver at time `t` with the measured state whenever no
    /// committed inputs remain. Must return at least one input.
    fn plan(&mut self, ctx: &SchemeContext<'_>, t: usize, measured: &DVector<f64>) -> Result<Plan, MpcError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopResult {
    pub scheme: String,
    /// Plant trajectory `x(0..=T)`.
    pub trajectory: Trajectory,
    pub applied_inputs: ControlSequence,
    /// `V(x(t))` for `t = 0..=T`.
    pub v_values: Vec<f64>,
    pub solves: Vec<SolveRecord>,
    /// `V(x(kM))` at each cycle start (contractive schemes only).
    pub cycle_anchors: Vec<f64>,
}

impl ClosedLoopResult {
    pub fn total_wall_time_secs(&self) -> f64 {
        self.solves.iter().map(|s| s.wall_time_secs).sum()
    }

    /// The solve whose first input was applied at `t`, if one ran then.
    pub fn solve_at(&self, t: usize) -> Option<&SolveRecord> {
        self.solves.iter().find(|s| s.time == t)
    }

    pub fn fallback_count(&self, kind: Fallback) -> usize {
        self.solves.iter().filter(|s| s.fallback == Some(kind)).count()
    }
}

/// Runs `scheme` on `plant` for `config.total_steps` steps from `initial`.
/// Predictions use `model` without disturbance.
pub fn run_closed_loop(
    scheme: &mut dyn MpcScheme,
    plant: &ControlSystem,
    model: &ControlSystem,
    fsclf: &FsClf,
    initial: &DVector<f64>,
    config: &ClosedLoopConfig,
) -> Result<ClosedLoopResult, MpcError> {
    config.validate()?;
    if plant.state_dim() != model.state_dim() || plant.input_dim() != model.input_dim() {
        return Err(MpcError::InvalidConfig("plant and model dimensions differ".into()));
    }
    if initial.len() != plant.state_dim() {
        return Err(ModelError::DimensionMismatch {
            what: "initial state",
            expected: plant.state_dim(),
            got: initial.len(),
        }
        .into());
    }
    let nominal = model.nominal();
    let ctx = SchemeContext {
        model: &nominal,
        fsclf,
        solver: &config.solver,
        warm_start: config.warm_start,
        on_infeasible: config.on_infeasible,
    };
    let mut states = vec![initial.clone()];
    let mut inputs = Vec::with_capacity(config.total_steps);
    let mut solves = Vec::new();
    let mut queue: VecDeque<DVector<f64>> = VecDeque::new();

    for t in 0..config.total_steps {
        let x = &states[t];
        if queue.is_empty() {
            let plan = scheme.plan(&ctx, t, x)?;
            if plan.inputs.is_empty() {
                return Err(MpcError::InvalidConfig(format!("scheme `{}` returned no inputs", scheme.name())));
            }
            queue.extend(plan.inputs);
            solves.push(plan.record);
        }
        let u = queue.pop_front().expect("queue refilled above");
        let next = plant.transition(x, &u, t)?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteState { step: t + 1 }.into());
        }
        inputs.push(u);
        states.push(next);
    }

    let v_values = states.iter().map(|x| fsclf.value(x)).collect();
    let cycle_anchors = solves.iter().filter_map(|s| s.anchor).collect();
    Ok(ClosedLoopResult {
        scheme: scheme.name().to_string(),
        applied_inputs: ControlSequence::new(plant.input_dim(), inputs.clone())?,
        trajectory: Trajectory { start_time: 0, states, inputs },
        v_values,
        solves,
        cycle_anchors,
    })
}

/// Creates the configured scheme from `registry` and runs it.
pub fn run_with_registry(
    registry: &SchemeRegistry,
    plant: &ControlSystem,
    model: &ControlSystem,
    fsclf: &FsClf,
    initial: &DVector<f64>,
    config: &ClosedLoopConfig,
) -> Result<ClosedLoopResult, MpcError> {
    let mut scheme = registry.create(&config.scheme, config.horizon, fsclf)?;
    run_closed_loop(scheme.as_mut(), plant, model, fsclf, initial, config)
}

/// Multi-step contractive MPC with `config.horizon = M`.
pub fn run_multistep(
    plant: &ControlSystem,
    model: &ControlSystem,
    fsclf: &FsClf,
    initial: &DVector<f64>,
    config: &ClosedLoopConfig,
) -> Result<ClosedLoopResult, MpcError> {
    let mut scheme = MultiStepScheme::new(config.horizon, fsclf)?;
    run_closed_loop(&mut scheme, plant, model, fsclf, initial, config)
}

/// Contractive MPC with shrinking-horizon re-optimization.
pub fn run_shrinking(
    plant: &ControlSystem,
    model: &ControlSystem,
    fsclf: &FsClf,
    initial: &DVector<f64>,
    config: &ClosedLoopConfig,
) -> Result<ClosedLoopResult, MpcError> {
    let mut scheme = ShrinkingScheme::new(config.horizon, fsclf)?;
    run_closed_loop(&mut scheme, plant, model, fsclf, initial, config)
}

/// Classic MPC with horizon `config.horizon = N`.
pub fn run_classic(
    plant: &ControlSystem,
    model: &ControlSystem,
    fsclf: &FsClf,
    initial: &DVector<f64>,
    config: &ClosedLoopConfig,
) -> Result<ClosedLoopResult, MpcError> {
    let mut scheme = ClassicScheme::new(config.horizon)?;
    run_closed_loop(&mut scheme, plant, model, fsclf, initial, config)
}

pub(crate) enum Attempt {
    Solved { sol: OcpSolution, retried: bool, secs: f64 },
    Infeasible { best: OcpSolution, residual: f64, secs: f64 },
}

/// Solves `spec`; on infeasibility retries once from zeros with a stiffer
/// penalty path.
pub(crate) fn solve_with_retry(
    ctx: &SchemeContext<'_>,
    spec: &OcpSpec,
    warm: Option<&ControlSequence>,
    time: usize,
) -> Result<Attempt, MpcError> {
    let started = Instant::now();
    match solve_ocp(spec, ctx.solver, warm) {
        Ok(sol) => Ok(Attempt::Solved { sol, retried: false, secs: started.elapsed().as_secs_f64() }),
        Err(OcpError::Infeasible { .. }) => {
            let relaxed = SolverConfig {
                initial_penalty: ctx.solver.initial_penalty * 100.0,
                max_outer_iters: ctx.solver.max_outer_iters * 2,
                max_inner_iters: ctx.solver.max_inner_iters * 2,
                ..ctx.solver.clone()
            };
            log::debug!("t={time}: retrying infeasible solve with relaxed penalty path");
            match solve_ocp(spec, &relaxed, None) {
                Ok(sol) => Ok(Attempt::Solved { sol, retried: true, secs: started.elapsed().as_secs_f64() }),
                Err(OcpError::Infeasible { max_residual, best, .. }) => Ok(Attempt::Infeasible {
                    best: *best,
                    residual: max_residual,
                    secs: started.elapsed().as_secs_f64(),
                }),
                Err(source) => Err(MpcError::Ocp { time, source }),
            }
        }
        Err(source) => Err(MpcError::Ocp { time, source }),
    }
}

/// Resolves an attempt under the `Error` / `BestEffort` policies.
pub(crate) fn accept(
    ctx: &SchemeContext<'_>,
    attempt: Attempt,
    (time, cycle, offset): (usize, usize, usize),
) -> Result<(OcpSolution, bool, f64, Option<Fallback>), MpcError> {
    match attempt {
        Attempt::Solved { sol, retried, secs } => Ok((sol, retried, secs, None)),
        Attempt::Infeasible { best, secs, .. } if ctx.on_infeasible == InfeasibilityPolicy::BestEffort => {
            log::warn!("t={time}: applying infeasible best iterate (residual {:e})", best.contraction_residual);
            Ok((best, true, secs, Some(Fallback::BestEffort)))
        }
        Attempt::Infeasible { residual, .. } => Err(MpcError::Infeasible {
            time,
            cycle,
            offset,
            residual,
        }),
    }
}

pub(crate) fn record(
    sol: &OcpSolution,
    (time, cycle, offset): (usize, usize, usize),
    measured: &DVector<f64>,
    anchor: Option<f64>,
    (retried, fallback): (bool, Option<Fallback>),
    wall_time_secs: f64,
) -> SolveRecord {
    SolveRecord {
        time,
        cycle,
        offset,
        horizon: sol.controls.len(),
        status: sol.status,
        outer_iterations: sol.outer_iterations,
        inner_iterations: sol.inner_iterations,
        cost: sol.cost,
        contraction_residual: sol.contraction_residual,
        wall_time_secs,
        initial_state: measured.clone(),
        anchor,
        retried,
        fallback,
    }
}
