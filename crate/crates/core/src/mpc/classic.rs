use nalgebra::DVector;

use super::{accept, record, solve_with_retry, MpcError, MpcScheme, Plan, SchemeContext, WarmStartPolicy};
use crate::model::ControlSequence;
use crate::ocp::{OcpSpec, OcpVariant};

/// Fixed horizon `N` at every step; applies the first input only.
#[derive(Debug, Clone)]
pub struct ClassicScheme {
    horizon: usize,
    previous: Option<ControlSequence>,
}

impl ClassicScheme {
    pub fn new(horizon: usize) -> Result<Self, MpcError> {
        if horizon == 0 {
            return Err(MpcError::InvalidConfig("classic horizon must be at least 1".into()));
        }
        Ok(Self { horizon, previous: None })
    }
}

impl MpcScheme for ClassicScheme {
    fn name(&self) -> &str {
        "classic"
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn plan(&mut self, ctx: &SchemeContext<'_>, t: usize, measured: &DVector<f64>) -> Result<Plan, MpcError> {
        let at = (t, t, 0);
        let warm = match (ctx.warm_start, &self.previous) {
            (WarmStartPolicy::ShiftPrevious, Some(prev)) => {
                let mut shifted = prev.tail(1);
                shifted.push(DVector::zeros(ctx.model.input_dim()))?;
                Some(shifted)
            }
            _ => None,
        };
        let spec = OcpSpec::new(OcpVariant::Classic { horizon: self.horizon }, ctx.model, ctx.fsclf, measured.clone()).at_time(t);
        let attempt = solve_with_retry(ctx, &spec, warm.as_ref(), t)?;
        let (sol, retried, secs, fallback) = accept(ctx, attempt, at)?;
        let first = sol.controls.inputs()[0].clone();
        let rec = record(&sol, at, measured, None, (retried, fallback), secs);
        self.previous = Some(sol.controls);
        Ok(Plan { inputs: vec![first], record: rec })
    }
}
