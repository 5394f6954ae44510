use super::ModelError;

/// Parametric class-K comparison function.
///
/// The family is closed under composition, which covers the decay function
/// `r -> c r`, the transient bound `r -> d r` and the power bound
/// `r -> q max{r^a, r^b}`.
#[derive(Debug, Clone, PartialEq)]
pub enum ComparisonFunction {
    /// `r -> c r`
    Linear(f64),
    /// `r -> q max{r^a, r^b}`
    PowerMax { q: f64, a: f64, b: f64 },
    /// `r -> outer(inner(r))`
    Compose {
        outer: Box<ComparisonFunction>,
        inner: Box<ComparisonFunction>,
    },
}

impl ComparisonFunction {
    pub fn identity() -> Self {
        ComparisonFunction::Linear(1.0)
    }

    pub fn linear(c: f64) -> Result<Self, ModelError> {
        if !(c.is_finite() && c >= 0.0) {
            return Err(ModelError::InvalidParameter(format!(
                "linear comparison coefficient must be finite and nonnegative, got {c}"
            )));
        }
        Ok(ComparisonFunction::Linear(c))
    }

    pub fn power_max(q: f64, a: f64, b: f64) -> Result<Self, ModelError> {
        for (name, v) in [("q", q), ("a", a), ("b", b)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ModelError::InvalidParameter(format!(
                    "power-max parameter {name} must be positive, got {v}"
                )));
            }
        }
        Ok(ComparisonFunction::PowerMax { q, a, b })
    }

    pub fn compose(outer: ComparisonFunction, inner: ComparisonFunction) -> Self {
        ComparisonFunction::Compose {
            outer: Box::new(outer),
            inner: Box::new(inner),
        }
    }

    /// Evaluates at `r`. Negative arguments are clamped to 0.
    pub fn eval(&self, r: f64) -> f64 {
        let r = r.max(0.0);
        match self {
            ComparisonFunction::Linear(c) => c * r,
            ComparisonFunction::PowerMax { q, a, b } => {
                if r == 0.0 {
                    0.0
                } else {
                    q * r.powf(*a).max(r.powf(*b))
                }
            }
            ComparisonFunction::Compose { outer, inner } => outer.eval(inner.eval(r)),
        }
    }

    /// Coefficient `c` if the function is (a composition of) linear maps.
    pub fn linear_coefficient(&self) -> Option<f64> {
        match self {
            ComparisonFunction::Linear(c) => Some(*c),
            ComparisonFunction::PowerMax { q, a, b } if *a == 1.0 && *b == 1.0 => Some(*q),
            ComparisonFunction::PowerMax { .. } => None,
            ComparisonFunction::Compose { outer, inner } => {
                Some(outer.linear_coefficient()? * inner.linear_coefficient()?)
            }
        }
    }

    /// Sampled check of `f(s) < s` for every positive `s` in `samples`.
    pub fn is_below_identity_on(&self, samples: &[f64]) -> bool {
        samples
            .iter()
            .filter(|s| **s > 0.0)
            .all(|s| self.eval(*s) < *s)
    }

    /// Sampled check of the class-K shape: zero at zero, nonnegative and
    /// strictly increasing along the sorted samples.
    pub fn is_class_k_on(&self, samples: &[f64]) -> bool {
        if self.eval(0.0) != 0.0 {
            return false;
        }
        let mut sorted: Vec<f64> = samples.iter().copied().filter(|s| *s >= 0.0).collect();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        sorted
            .windows(2)
            .all(|w| self.eval(w[0]) >= 0.0 && self.eval(w[0]) < self.eval(w[1]))
    }
}

/// Logarithmic grid on `[1e-6, 1e6]` used by the sampled checks.
pub(crate) fn default_grid() -> Vec<f64> {
    (0..=120).map(|k| 10f64.powf(-6.0 + 0.1 * k as f64)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn linear_decay_is_below_identity() {
        let alpha = ComparisonFunction::linear(0.9).unwrap();
        assert!(alpha.is_below_identity_on(&default_grid()));
        assert!(alpha.is_class_k_on(&default_grid()));
        assert!(!ComparisonFunction::identity().is_below_identity_on(&default_grid()));
    }

    #[test]
    fn power_max_switches_exponent_at_one() {
        let f = ComparisonFunction::power_max(2.0, 1.0, 3.0).unwrap();
        assert_eq!(f.eval(0.5), 1.0);
        assert_eq!(f.eval(2.0), 16.0);
        assert_eq!(f.eval(0.0), 0.0);
    }

    #[test]
    fn composition_of_linears_is_linear() {
        let f = ComparisonFunction::compose(
            ComparisonFunction::Linear(2.0),
            ComparisonFunction::Linear(0.25),
        );
        assert_eq!(f.linear_coefficient(), Some(0.5));
        assert_eq!(f.eval(4.0), 2.0);
        let g = ComparisonFunction::compose(
            ComparisonFunction::Linear(2.0),
            ComparisonFunction::power_max(1.0, 2.0, 2.0).unwrap(),
        );
        assert_eq!(g.linear_coefficient(), None);
        assert_eq!(g.eval(3.0), 18.0);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(ComparisonFunction::linear(-1.0).is_err());
        assert!(ComparisonFunction::linear(f64::NAN).is_err());
        assert!(ComparisonFunction::power_max(1.0, 0.0, 2.0).is_err());
    }

    fn family() -> impl Strategy<Value = ComparisonFunction> {
        let leaf = prop_oneof![
            (0.01f64..10.0).prop_map(ComparisonFunction::Linear),
            (0.01f64..10.0, 0.1f64..3.0, 0.1f64..3.0)
                .prop_map(|(q, a, b)| ComparisonFunction::PowerMax { q, a, b }),
        ];
        leaf.prop_recursive(2, 4, 2, |inner| {
            (inner.clone(), inner).prop_map(|(o, i)| ComparisonFunction::compose(o, i))
        })
    }

    proptest! {
        #[test]
        fn monotone_and_zero_at_zero(f in family(), s1 in 0.0f64..50.0, ds in 0.0f64..50.0) {
            prop_assert_eq!(f.eval(0.0), 0.0);
            let s2 = s1 + ds;
            prop_assert!(f.eval(s1) <= f.eval(s2));
            prop_assert!(f.eval(s1) >= 0.0);
        }

        #[test]
        fn contractive_linear_stays_below(c in 0.0f64..0.999, s in 1e-9f64..1e9) {
            prop_assert!(ComparisonFunction::Linear(c).eval(s) < s);
        }
    }
}
