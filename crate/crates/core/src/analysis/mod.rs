//! Certification of fs-CLF candidates, horizon bounds for classic MPC and
//! trajectory metrics.

mod certify;
mod horizon;
mod metrics;
mod sampling;

pub use certify::{
    certify_fsclf, fit_transient_constants, CertificationConfig, CertificationReport, SampleCertificate,
    TransientConstants, Verdict, DEFAULT_MARGIN,
};
pub use horizon::{horizon_bound, HorizonBoundInputs};
pub use metrics::{converse_decay_check, fit_exponential_envelope, max_deviation_post_transient, DecayCheck, EnvelopeFit};
pub use sampling::{fibonacci_sphere, level_set_samples, project_to_level_set};

use thiserror::Error;

use crate::model::ModelError;
use crate::ocp::OcpError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Ocp(#[from] OcpError),
    #[error("no samples given")]
    EmptySamples,
    #[error("trajectory of length {len} is shorter than one cycle of {steps} steps")]
    TrajectoryTooShort { len: usize, steps: usize },
    #[error("component {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("sample {index} is infeasible (residual {residual:e})")]
    SampleInfeasible { index: usize, residual: f64 },
    #[error("{0}")]
    InvalidInput(String),
}
