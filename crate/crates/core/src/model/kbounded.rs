use nalgebra::DVector;

use super::{ComparisonFunction, ControlSystem, MeasurementFunction, ModelError};

/// Linear fit of the growth bound `w1(g(x,u)) <= c1 w1(x) + c2 w2(u)` over a
/// sample set.
#[derive(Debug, Clone, PartialEq)]
pub struct KBoundReport {
    /// `kappa_1(r) = c1 r`; `None` if no finite fit exists.
    pub kappa1: Option<ComparisonFunction>,
    pub kappa2: Option<ComparisonFunction>,
    /// Largest `w1(g) - c1 w1(x) - c2 w2(u)` over the samples (0 when the fit
    /// holds exactly).
    pub worst_violation: f64,
    /// Samples with `w1(x) = w2(u) = 0` but `w1(g(x,u)) > 0`; any such sample
    /// rules out a finite fit.
    pub violating_samples: Vec<usize>,
}

impl KBoundReport {
    pub fn coefficients(&self) -> Option<(f64, f64)> {
        Some((
            self.kappa1.as_ref()?.linear_coefficient()?,
            self.kappa2.as_ref()?.linear_coefficient()?,
        ))
    }
}

/// Finds linear `kappa_1, kappa_2` with the smallest `c1 + c2` such that the
/// K-boundedness inequality holds on every sample. The nominal transition map
/// is used.
pub fn check_k_bounded(
    system: &ControlSystem,
    omega1: &MeasurementFunction,
    omega2: &MeasurementFunction,
    samples: &[(DVector<f64>, DVector<f64>)],
) -> Result<KBoundReport, ModelError> {
    if samples.is_empty() {
        return Err(ModelError::EmptySamples);
    }
    let nominal = system.nominal();
    let mut rows = Vec::with_capacity(samples.len());
    let mut violating = Vec::new();
    for (i, (x, u)) in samples.iter().enumerate() {
        let next = nominal.transition(x, u, 0)?;
        let r = omega1.eval(&next);
        let a = omega1.eval(x);
        let b = omega2.eval(u);
        if a == 0.0 && b == 0.0 && r > 0.0 {
            violating.push(i);
        }
        rows.push((r, a, b));
    }
    if !violating.is_empty() {
        return Ok(KBoundReport {
            kappa1: None,
            kappa2: None,
            worst_violation: f64::INFINITY,
            violating_samples: violating,
        });
    }

    // c1 is forced up by samples with no input contribution
    let mut c1_lo: f64 = 0.0;
    let mut c1_hi: f64 = 0.0;
    for &(r, a, b) in &rows {
        if r > 0.0 && a > 0.0 {
            c1_hi = c1_hi.max(r / a);
            if b == 0.0 {
                c1_lo = c1_lo.max(r / a);
            }
        }
    }
    c1_hi = c1_hi.max(c1_lo);

    let c2_for = |c1: f64| {
        rows.iter()
            .filter(|(_, _, b)| *b > 0.0)
            .map(|&(r, a, b)| (r - a * c1).max(0.0) / b)
            .fold(0.0, f64::max)
    };
    // c1 + c2(c1) is convex and piecewise linear in c1
    let (mut lo, mut hi) = (c1_lo, c1_hi);
    for _ in 0..200 {
        if hi - lo <= f64::EPSILON * hi.max(1.0) {
            break;
        }
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if m1 + c2_for(m1) <= m2 + c2_for(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let mut c1 = lo;
    for cand in [c1_lo, c1_hi] {
        if cand + c2_for(cand) < c1 + c2_for(c1) {
            c1 = cand;
        }
    }
    let c2 = c2_for(c1);
    let worst = rows
        .iter()
        .map(|&(r, a, b)| (r - c1 * a - c2 * b).max(0.0))
        .fold(0.0, f64::max);
    Ok(KBoundReport {
        kappa1: Some(ComparisonFunction::Linear(c1)),
        kappa2: Some(ComparisonFunction::Linear(c2)),
        worst_violation: worst,
        violating_samples: Vec::new(),
    })
}
