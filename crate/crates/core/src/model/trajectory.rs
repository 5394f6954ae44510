use nalgebra::DVector;

use super::{check_dim, ConstraintSet, ControlSystem, ModelError};

/// Finite input sequence `(u(0), ..., u(k-1))`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSequence {
    input_dim: usize,
    inputs: Vec<DVector<f64>>,
}

impl ControlSequence {
    pub fn new(input_dim: usize, inputs: Vec<DVector<f64>>) -> Result<Self, ModelError> {
        for u in &inputs {
            check_dim("control input", input_dim, u.len())?;
        }
        Ok(Self { input_dim, inputs })
    }

    pub fn zeros(input_dim: usize, len: usize) -> Self {
        Self {
            input_dim,
            inputs: vec![DVector::zeros(input_dim); len],
        }
    }

    /// Splits a stacked decision vector into `flat.len() / input_dim` inputs.
    pub fn from_flat(input_dim: usize, flat: &[f64]) -> Result<Self, ModelError> {
        if input_dim == 0 || !flat.len().is_multiple_of(input_dim) {
            return Err(ModelError::DimensionMismatch {
                what: "stacked control vector",
                expected: input_dim,
                got: flat.len(),
            });
        }
        Ok(Self {
            input_dim,
            inputs: flat
                .chunks(input_dim)
                .map(DVector::from_column_slice)
                .collect(),
        })
    }

    pub fn to_flat(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.inputs.len() * self.input_dim,
            self.inputs.iter().flat_map(|u| u.iter().copied()),
        )
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn inputs(&self) -> &[DVector<f64>] {
        &self.inputs
    }

    pub fn push(&mut self, u: DVector<f64>) -> Result<(), ModelError> {
        check_dim("control input", self.input_dim, u.len())?;
        self.inputs.push(u);
        Ok(())
    }

    /// Drops the first `k` inputs.
    pub fn tail(&self, k: usize) -> Self {
        Self {
            input_dim: self.input_dim,
            inputs: self.inputs.iter().skip(k).cloned().collect(),
        }
    }

    pub fn all_within(&self, set: &ConstraintSet, tol: f64) -> bool {
        self.inputs.iter().all(|u| set.contains(u, tol))
    }
}

/// States `x(start..=start+T)` and inputs `u(start..start+T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub start_time: usize,
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory holds at least the initial state")
    }

    pub fn times(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.states.len()).map(move |k| self.start_time + k)
    }

    /// Largest deviation between stored successor states and a fresh
    /// evaluation of `system.transition`.
    pub fn recomputation_error(&self, system: &ControlSystem) -> Result<f64, ModelError> {
        let mut worst: f64 = 0.0;
        for (k, u) in self.inputs.iter().enumerate() {
            let next = system.transition(&self.states[k], u, self.start_time + k)?;
            worst = worst.max((next - &self.states[k + 1]).amax());
        }
        Ok(worst)
    }
}

/// Simulates `system` from `initial` under `controls`, with the disturbance
/// evaluated at absolute times `start_time, start_time + 1, ...`.
pub fn rollout(
    system: &ControlSystem,
    initial: &DVector<f64>,
    controls: &ControlSequence,
    start_time: usize,
) -> Result<Trajectory, ModelError> {
    check_dim("initial state", system.state_dim(), initial.len())?;
    check_dim("control input", system.input_dim(), controls.input_dim())?;
    let mut states = Vec::with_capacity(controls.len() + 1);
    states.push(initial.clone());
    for (k, u) in controls.inputs().iter().enumerate() {
        let next = system.transition(&states[k], u, start_time + k)?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteState { step: k + 1 });
        }
        states.push(next);
    }
    Ok(Trajectory {
        start_time,
        states,
        inputs: controls.inputs().to_vec(),
    })
}
