use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use super::ModelError;

type EvalFn = dyn Fn(&DVector<f64>) -> f64 + Send + Sync;

/// Nonnegative state functional with a nonempty zero set.
#[derive(Clone)]
pub enum MeasurementFunction {
    EuclideanNorm,
    InfinityNorm,
    Custom {
        name: String,
        eval: Arc<EvalFn>,
        zero_witness: DVector<f64>,
    },
}

impl MeasurementFunction {
    /// Wraps a user function. Fails unless `eval(zero_witness) == 0`.
    pub fn custom<F>(name: &str, eval: F, zero_witness: DVector<f64>) -> Result<Self, ModelError>
    where
        F: Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
    {
        let at_witness = eval(&zero_witness);
        if at_witness != 0.0 {
            return Err(ModelError::InvalidParameter(format!(
                "measurement function `{name}` is {at_witness} at its zero witness"
            )));
        }
        Ok(MeasurementFunction::Custom {
            name: name.to_string(),
            eval: Arc::new(eval),
            zero_witness,
        })
    }

    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        match self {
            MeasurementFunction::EuclideanNorm => x.norm(),
            MeasurementFunction::InfinityNorm => x.amax(),
            MeasurementFunction::Custom { eval, .. } => eval(x).max(0.0),
        }
    }

    /// A point of the zero set in dimension `n`.
    pub fn zero_witness(&self, n: usize) -> DVector<f64> {
        match self {
            MeasurementFunction::Custom { zero_witness, .. } => zero_witness.clone(),
            _ => DVector::zeros(n),
        }
    }

    /// Gradient where it exists in closed form.
    pub fn gradient(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        match self {
            MeasurementFunction::EuclideanNorm => {
                let n = x.norm();
                if n == 0.0 {
                    Some(DVector::zeros(x.len()))
                } else {
                    Some(x / n)
                }
            }
            _ => None,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            MeasurementFunction::EuclideanNorm => "euclidean-norm",
            MeasurementFunction::InfinityNorm => "infinity-norm",
            MeasurementFunction::Custom { name, .. } => name,
        }
    }
}

impl fmt::Debug for MeasurementFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MeasurementFunction({})", self.name())
    }
}
