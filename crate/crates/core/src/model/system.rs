use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{check_dim, ConstraintSet, ModelError};

/// Nominal transition map `x+ = g(x, u)`.
pub trait Dynamics: Send + Sync {
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;

    /// Jacobians `(dg/dx, dg/du)` at `(x, u)`, when available in closed form.
    /// Callers fall back to finite differences otherwise.
    fn jacobians(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        None
    }

    fn name(&self) -> &str {
        "dynamics"
    }
}

/// `x+ = A x + B u`
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDynamics {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl LinearDynamics {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self, ModelError> {
        if !a.is_square() {
            return Err(ModelError::InvalidParameter(format!(
                "system matrix A must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        check_dim("rows of B", a.nrows(), b.nrows())?;
        if b.ncols() == 0 || a.nrows() == 0 {
            return Err(ModelError::InvalidParameter("empty system matrices".into()));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidParameter("system matrices must be finite".into()));
        }
        Ok(Self { a, b })
    }
}

impl Dynamics for LinearDynamics {
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u
    }

    fn jacobians(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        Some((self.a.clone(), self.b.clone()))
    }

    fn name(&self) -> &str {
        "linear"
    }
}

type StepFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync;

/// Transition map given by a closure. Gradients through it are taken by
/// finite differences.
#[derive(Clone)]
pub struct FnDynamics {
    name: String,
    f: Arc<StepFn>,
}

impl FnDynamics {
    pub fn new<F>(name: &str, f: F) -> Self
    where
        F: Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        Self {
            name: name.to_string(),
            f: Arc::new(f),
        }
    }
}

impl Dynamics for FnDynamics {
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        (self.f)(x, u)
    }

    fn name(&self) -> &str {
        &self.name
    }
}

/// Additive signal `amplitude * sin(frequency * t)` on selected state
/// components, applied after the nominal map at absolute time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Disturbance {
    pub amplitude: f64,
    pub frequency: f64,
    pub components: Vec<usize>,
}

impl Disturbance {
    pub fn value(&self, t: usize, n: usize) -> DVector<f64> {
        let mut d = DVector::zeros(n);
        let s = self.amplitude * (self.frequency * t as f64).sin();
        for &k in &self.components {
            d[k] += s;
        }
        d
    }
}

/// Discrete-time control system with constraint sets and an optional
/// exogenous disturbance.
#[derive(Clone)]
pub struct ControlSystem {
    state_dim: usize,
    input_dim: usize,
    dynamics: Arc<dyn Dynamics>,
    pub state_set: ConstraintSet,
    pub input_set: ConstraintSet,
    disturbance: Option<Disturbance>,
}

impl ControlSystem {
    pub fn new(state_dim: usize, input_dim: usize, dynamics: Arc<dyn Dynamics>) -> Result<Self, ModelError> {
        if state_dim == 0 || input_dim == 0 {
            return Err(ModelError::InvalidParameter(
                "state and input dimensions must be positive".into(),
            ));
        }
        Ok(Self {
            state_dim,
            input_dim,
            dynamics,
            state_set: ConstraintSet::Unbounded,
            input_set: ConstraintSet::Unbounded,
            disturbance: None,
        })
    }

    pub fn linear(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self, ModelError> {
        let (n, m) = (a.nrows(), b.ncols());
        Self::new(n, m, Arc::new(LinearDynamics::new(a, b)?))
    }

    pub fn with_state_set(mut self, set: ConstraintSet) -> Result<Self, ModelError> {
        if let Some(d) = set.dim() {
            check_dim("state set", self.state_dim, d)?;
        }
        self.state_set = set;
        Ok(self)
    }

    pub fn with_input_set(mut self, set: ConstraintSet) -> Result<Self, ModelError> {
        if let Some(d) = set.dim() {
            check_dim("input set", self.input_dim, d)?;
        }
        self.input_set = set;
        Ok(self)
    }

    pub fn with_disturbance(mut self, disturbance: Disturbance) -> Result<Self, ModelError> {
        if let Some(&k) = disturbance.components.iter().find(|k| **k >= self.state_dim) {
            return Err(ModelError::InvalidParameter(format!(
                "disturbance component {k} out of range for state dimension {}",
                self.state_dim
            )));
        }
        if !(disturbance.amplitude.is_finite() && disturbance.frequency.is_finite()) {
            return Err(ModelError::InvalidParameter("disturbance parameters must be finite".into()));
        }
        self.disturbance = Some(disturbance);
        Ok(self)
    }

    /// The same system with the disturbance removed; used for prediction.
    pub fn nominal(&self) -> Self {
        Self {
            disturbance: None,
            ..self.clone()
        }
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn dynamics(&self) -> &dyn Dynamics {
        self.dynamics.as_ref()
    }

    pub fn disturbance(&self) -> Option<&Disturbance> {
        self.disturbance.as_ref()
    }

    /// `g(x, u) + d(t)`. Dimensions are checked; finiteness is the caller's
    /// concern (see [`rollout`](super::rollout)).
    pub fn transition(&self, x: &DVector<f64>, u: &DVector<f64>, t: usize) -> Result<DVector<f64>, ModelError> {
        check_dim("state", self.state_dim, x.len())?;
        check_dim("input", self.input_dim, u.len())?;
        let next = self.dynamics.step(x, u);
        check_dim("transition output", self.state_dim, next.len())?;
        Ok(match &self.disturbance {
            Some(d) => next + d.value(t, self.state_dim),
            None => next,
        })
    }
}

impl fmt::Debug for ControlSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlSystem")
            .field("state_dim", &self.state_dim)
            .field("input_dim", &self.input_dim)
            .field("dynamics", &self.dynamics.name())
            .field("state_set", &self.state_set)
            .field("input_set", &self.input_set)
            .field("disturbance", &self.disturbance)
            .finish()
    }
}
