//! Domain types for discrete-time control systems and fs-CLFs.

mod comparison;
mod fsclf;
mod kbounded;
mod measurement;
mod sets;
mod system;
mod trajectory;

pub use comparison::ComparisonFunction;
pub use fsclf::{FsClf, LyapunovCandidate};
pub use kbounded::{check_k_bounded, KBoundReport};
pub use measurement::MeasurementFunction;
pub use sets::ConstraintSet;
pub use system::{ControlSystem, Disturbance, Dynamics, FnDynamics, LinearDynamics};
pub use trajectory::{rollout, ControlSequence, Trajectory};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite state produced at step {step}")]
    NonFiniteState { step: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no samples given")]
    EmptySamples,
}

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<(), ModelError> {
    if expected != got {
        return Err(ModelError::DimensionMismatch { what, expected, got });
    }
    Ok(())
}
