use nalgebra::DVector;

use super::{
    accept, record, solve_with_retry, Attempt, Fallback, InfeasibilityPolicy, MpcError, MpcScheme, Plan,
    SchemeContext, WarmStartPolicy,
};
use crate::model::{ControlSequence, FsClf};
use crate::ocp::{OcpSpec, OcpVariant};

/// Re-optimizes every step on the remaining horizon of the current cycle,
/// keeping the contraction target of the cycle start.
///
/// At offset 0 the full problem is solved from zeros, which makes the first
/// solve of each cycle identical to the multi-step scheme's. Cycles start at
/// multiples of `M` unless [`InfeasibilityPolicy::RestartCycle`] opened one
/// early.
#[derive(Debug, Clone)]
pub struct ShrinkingScheme {
    steps: usize,
    anchor: f64,
    cycle: usize,
    cycle_start: usize,
    previous: Option<ControlSequence>,
}

impl ShrinkingScheme {
    pub fn new(steps: usize, fsclf: &FsClf) -> Result<Self, MpcError> {
        if steps == 0 || steps != fsclf.steps {
            return Err(MpcError::InvalidConfig(format!(
                "shrinking horizon {steps} must equal the fs-CLF step count {}",
                fsclf.steps
            )));
        }
        Ok(Self {
            steps,
            anchor: 0.0,
            cycle: 0,
            cycle_start: 0,
            previous: None,
        })
    }

    fn spec(&self, ctx: &SchemeContext<'_>, horizon: usize, t: usize, measured: &DVector<f64>) -> OcpSpec {
        OcpSpec::new(
            OcpVariant::Shrinking { horizon, anchor_value: self.anchor },
            ctx.model,
            ctx.fsclf,
            measured.clone(),
        )
        .at_time(t)
    }

    fn open_cycle(&mut self, ctx: &SchemeContext<'_>, t: usize, measured: &DVector<f64>) {
        if t > 0 {
            self.cycle += 1;
        }
        self.cycle_start = t;
        self.anchor = ctx.fsclf.value(measured);
    }
}

impl MpcScheme for ShrinkingScheme {
    fn name(&self) -> &str {
        "shrinking-updated"
    }

    fn horizon(&self) -> usize {
        self.steps
    }

    fn plan(&mut self, ctx: &SchemeContext<'_>, t: usize, measured: &DVector<f64>) -> Result<Plan, MpcError> {
        if t == 0 || t - self.cycle_start >= self.steps {
            self.open_cycle(ctx, t, measured);
        }
        let offset = t - self.cycle_start;
        let horizon = self.steps - offset;
        let warm = match (offset, ctx.warm_start, &self.previous) {
            (0, ..) => None,
            (_, WarmStartPolicy::ShiftPrevious, Some(prev)) if prev.len() == horizon + 1 => Some(prev.tail(1)),
            _ => None,
        };
        let mut attempt = solve_with_retry(ctx, &self.spec(ctx, horizon, t, measured), warm.as_ref(), t)?;
        let mut restarted = false;
        if offset > 0
            && ctx.on_infeasible == InfeasibilityPolicy::RestartCycle
            && matches!(attempt, Attempt::Infeasible { .. })
        {
            log::info!("t={t}: shrinking problem infeasible at offset {offset}, opening a new cycle");
            self.open_cycle(ctx, t, measured);
            attempt = solve_with_retry(ctx, &self.spec(ctx, self.steps, t, measured), None, t)?;
            restarted = true;
        }
        let offset = t - self.cycle_start;
        let at = (t, self.cycle, offset);
        let (sol, retried, secs, fallback) = accept(ctx, attempt, at)?;
        let fallback = fallback.or(restarted.then_some(Fallback::RestartedCycle));
        let first = sol.controls.inputs()[0].clone();
        let anchor = (offset == 0).then_some(self.anchor);
        let rec = record(&sol, at, measured, anchor, (retried, fallback), secs);
        self.previous = Some(sol.controls);
        Ok(Plan { inputs: vec![first], record: rec })
    }
}
