use nalgebra::DVector;

use super::{accept, record, solve_with_retry, MpcError, MpcScheme, Plan, SchemeContext};
use crate::model::FsClf;
use crate::ocp::{OcpSpec, OcpVariant};

/// Solves the contractive problem at `t = kM` and commits to all `M` inputs.
#[derive(Debug, Clone)]
pub struct MultiStepScheme {
    steps: usize,
}

impl MultiStepScheme {
    pub fn new(steps: usize, fsclf: &FsClf) -> Result<Self, MpcError> {
        if steps == 0 || steps != fsclf.steps {
            return Err(MpcError::InvalidConfig(format!(
                "multi-step horizon {steps} must equal the fs-CLF step count {}",
                fsclf.steps
            )));
        }
        Ok(Self { steps })
    }
}

impl MpcScheme for MultiStepScheme {
    fn name(&self) -> &str {
        "multi-step"
    }

    fn horizon(&self) -> usize {
        self.steps
    }

    fn plan(&mut self, ctx: &SchemeContext<'_>, t: usize, measured: &DVector<f64>) -> Result<Plan, MpcError> {
        let at = (t, t / self.steps, 0);
        let spec = OcpSpec::new(OcpVariant::Contractive { steps: self.steps }, ctx.model, ctx.fsclf, measured.clone()).at_time(t);
        // the whole previous sequence was applied, nothing to shift
        let attempt = solve_with_retry(ctx, &spec, None, t)?;
        let (sol, retried, secs, fallback) = accept(ctx, attempt, at)?;
        let anchor = ctx.fsclf.value(measured);
        Ok(Plan {
            inputs: sol.controls.inputs().to_vec(),
            record: record(&sol, at, measured, Some(anchor), (retried, fallback), secs),
        })
    }
}
