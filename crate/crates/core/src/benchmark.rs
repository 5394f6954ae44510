//! Third-order benchmark: a chain of integrators with an unstable last state,
//!
//! ```text
//! x1+ = x1 + x2 (+ 0.1 sin(t/4))
//! x2+ = x2 + x3
//! x3+ = 1.5 x3 + u
//! ```
//!
//! with the quadratic fs-CLF candidate `V(x) = x^T P x`, decay `0.9 r` and
//! initial state `(-1, 1, 1)`.

use nalgebra::{DMatrix, DVector};

use crate::model::{ComparisonFunction, ControlSystem, Disturbance, FsClf, ModelError};

pub const DECAY: f64 = 0.9;
pub const STEPS: usize = 6;
pub const CLASSIC_HORIZON: usize = 6;
pub const TOTAL_STEPS: usize = 100;
pub const TRANSIENT_END: usize = 36;
pub const DISTURBANCE_AMPLITUDE: f64 = 0.1;
pub const DISTURBANCE_FREQUENCY: f64 = 0.25;

pub fn system_matrix() -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.5])
}

pub fn input_matrix() -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 1, &[0.0, 0.0, 1.0])
}

pub fn p_matrix() -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.25, 0.0, 1.0, 0.25, 0.25, 0.25, 1.0])
}

pub fn initial_state() -> DVector<f64> {
    DVector::from_vec(vec![-1.0, 1.0, 1.0])
}

pub fn nominal_system() -> ControlSystem {
    ControlSystem::linear(system_matrix(), input_matrix()).expect("benchmark matrices are valid")
}

pub fn disturbance() -> Disturbance {
    Disturbance {
        amplitude: DISTURBANCE_AMPLITUDE,
        frequency: DISTURBANCE_FREQUENCY,
        components: vec![0],
    }
}

pub fn perturbed_system() -> ControlSystem {
    nominal_system()
        .with_disturbance(disturbance())
        .expect("disturbance targets x1")
}

/// Quadratic candidate with decay `0.9 r` for step count `steps`.
pub fn fsclf(steps: usize) -> Result<FsClf, ModelError> {
    FsClf::quadratic(p_matrix(), ComparisonFunction::Linear(DECAY), steps)
}
