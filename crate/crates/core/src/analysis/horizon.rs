use serde::Serialize;

use super::AnalysisError;

/// Constants of the linear transient and decay bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HorizonBoundInputs {
    /// Contraction factor, in `[0, 1)`.
    pub c: f64,
    /// Transient growth factor, positive.
    pub d: f64,
    /// Step count `M`.
    pub m: usize,
}

impl HorizonBoundInputs {
    pub fn new(c: f64, d: f64, m: usize) -> Result<Self, AnalysisError> {
        if !(c.is_finite() && (0.0..1.0).contains(&c)) {
            return Err(AnalysisError::InvalidInput(format!("c must lie in [0, 1), got {c}")));
        }
        if !(d.is_finite() && d > 0.0) {
            return Err(AnalysisError::InvalidInput(format!("d must be positive, got {d}")));
        }
        if m == 0 {
            return Err(AnalysisError::InvalidInput("M must be at least 1".into()));
        }
        Ok(Self { c, d, m })
    }

    /// `gamma = M d / (1 - c)`.
    pub fn gamma(&self) -> f64 {
        self.m as f64 * self.d / (1.0 - self.c)
    }
}

/// Smallest horizon `N` with `N > 2 + ln(gamma-1) / (ln gamma - ln(gamma-1))`.
///
/// For `gamma <= 1` the logarithms are undefined and 1 is returned. As
/// `gamma` decreases to 1 the bound tends to 1 from above, so every
/// `gamma` in `(1, 2)` yields 2.
pub fn horizon_bound(gamma: f64) -> Result<usize, AnalysisError> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(AnalysisError::InvalidInput(format!("gamma must be positive and finite, got {gamma}")));
    }
    if gamma <= 1.0 {
        return Ok(1);
    }
    let excess = (gamma - 1.0).ln();
    let bound = 2.0 + excess / (gamma.ln() - excess);
    Ok(bound.floor() as usize + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_values() {
        assert_eq!(horizon_bound(2.0).unwrap(), 3);
        assert_eq!(horizon_bound(4.0).unwrap(), 6);
        assert_eq!(horizon_bound(1.0).unwrap(), 1);
        assert_eq!(horizon_bound(0.5).unwrap(), 1);
        assert_eq!(horizon_bound(1.0001).unwrap(), 2);
        assert!(horizon_bound(0.0).is_err());
        assert!(horizon_bound(f64::NAN).is_err());
    }

    #[test]
    fn gamma_assembly() {
        let h = HorizonBoundInputs::new(0.5, 1.0, 1).unwrap();
        assert_eq!(h.gamma(), 2.0);
        assert!(HorizonBoundInputs::new(1.0, 1.0, 1).is_err());
        assert!(HorizonBoundInputs::new(0.5, 0.0, 1).is_err());
        assert!(HorizonBoundInputs::new(0.5, 1.0, 0).is_err());
    }

    #[test]
    fn nonincreasing_as_gamma_decreases() {
        let mut prev = usize::MAX;
        for k in (11..=1000).rev() {
            let n = horizon_bound(k as f64 / 10.0).unwrap();
            assert!(n <= prev);
            prev = n;
        }
    }

    proptest! {
        #[test]
        fn strictly_exceeds_formula(gamma in 1.0001f64..1e6) {
            let n = horizon_bound(gamma).unwrap() as f64;
            let bound = 2.0 + (gamma - 1.0).ln() / (gamma.ln() - (gamma - 1.0).ln());
            prop_assert!(n > bound && n - 1.0 <= bound);
        }
    }
}
