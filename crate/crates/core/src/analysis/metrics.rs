use nalgebra::DVector;
use serde::Serialize;

use super::AnalysisError;
use crate::model::Trajectory;

/// Values below this are treated as "at the target set" when forming ratios.
const ZERO_LEVEL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayCheck {
    /// Largest `w(x(kM+M)) / w(x(kM))`; `None` when no cycle qualified.
    pub lambda_hat: Option<f64>,
    pub satisfied: bool,
    pub vacuous: bool,
    pub cycles: usize,
    pub ratios: Vec<f64>,
}

/// Checks whether `omega` contracts over every full `steps`-cycle of `traj`.
/// Cycles starting below `1e-12` are skipped; if none remain the result is
/// vacuous (and not counted as satisfied).
pub fn converse_decay_check(
    traj: &Trajectory,
    omega: impl Fn(&DVector<f64>) -> f64,
    steps: usize,
) -> Result<DecayCheck, AnalysisError> {
    if steps == 0 {
        return Err(AnalysisError::InvalidInput("step count must be at least 1".into()));
    }
    if traj.len() < steps {
        return Err(AnalysisError::TrajectoryTooShort { len: traj.len(), steps });
    }
    let values: Vec<f64> = traj.states.iter().map(&omega).collect();
    let ratios: Vec<f64> = (0..=traj.len() - steps)
        .step_by(steps)
        .filter(|&k| values[k] >= ZERO_LEVEL)
        .map(|k| values[k + steps] / values[k])
        .collect();
    let lambda_hat = ratios.iter().copied().reduce(f64::max);
    Ok(DecayCheck {
        satisfied: lambda_hat.is_some_and(|l| l < 1.0),
        vacuous: lambda_hat.is_none(),
        cycles: ratios.len(),
        lambda_hat,
        ratios,
    })
}

/// `max |x_component(t)|` over `t` in `[window_start, T]`.
pub fn max_deviation_post_transient(traj: &Trajectory, component: usize, window_start: usize) -> Result<f64, AnalysisError> {
    let n = traj.states[0].len();
    if component >= n {
        return Err(AnalysisError::IndexOutOfRange { index: component, dim: n });
    }
    if window_start >= traj.len() {
        return Err(AnalysisError::InvalidInput(format!(
            "window start {window_start} must precede the final time {}",
            traj.len()
        )));
    }
    Ok(traj.states[window_start..]
        .iter()
        .map(|x| x[component].abs())
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeFit {
    /// Overshoot constant `C` of `w(t) <= C sigma^t w(0)`.
    pub c: f64,
    pub sigma: f64,
    pub exponential: bool,
    /// Number of leading samples used; shorter than the series when it hit 0.
    pub fitted_len: usize,
}

/// Fits `w(t) <= C sigma^t w(0)` to a series: least squares on the vertices of
/// the upper convex hull of `(t, ln(w(t)/w(0)))`, then the intercept is raised
/// until the line bounds every point. A series that reaches 0 is fitted on the
/// prefix before the first zero.
pub fn fit_exponential_envelope(series: &[f64]) -> Result<EnvelopeFit, AnalysisError> {
    let w0 = *series.first().ok_or(AnalysisError::EmptySamples)?;
    if !(w0.is_finite() && w0 > 0.0) {
        return Err(AnalysisError::InvalidInput(format!("series must start positive, got {w0}")));
    }
    let len = series.iter().position(|&w| w <= 0.0).unwrap_or(series.len());
    if len < 2 {
        return Err(AnalysisError::InvalidInput("at least two positive samples are needed".into()));
    }
    let pts: Vec<(f64, f64)> = series[..len].iter().enumerate().map(|(t, w)| (t as f64, (w / w0).ln())).collect();

    let mut hull: Vec<(f64, f64)> = Vec::new();
    for &p in &pts {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            // drop b unless it lies strictly above the chord a-p
            if (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0) >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    let k = hull.len() as f64;
    let mt = hull.iter().map(|p| p.0).sum::<f64>() / k;
    let my = hull.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = hull.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = hull.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = pts.iter().map(|p| p.1 - slope * p.0).fold(f64::NEG_INFINITY, f64::max);
    let sigma = slope.exp();
    Ok(EnvelopeFit {
        c: intercept.exp(),
        sigma,
        exponential: sigma < 1.0,
        fitted_len: len,
    })
}
