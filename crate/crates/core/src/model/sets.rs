use nalgebra::DVector;

use super::ModelError;

/// State or input constraint set.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintSet {
    Unbounded,
    /// Componentwise bounds. Entries may be infinite.
    Box {
        lower: DVector<f64>,
        upper: DVector<f64>,
    },
}

impl ConstraintSet {
    pub fn boxed(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self, ModelError> {
        if lower.len() != upper.len() {
            return Err(ModelError::DimensionMismatch {
                what: "box upper bound",
                expected: lower.len(),
                got: upper.len(),
            });
        }
        for (i, (lo, hi)) in lower.iter().zip(upper.iter()).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(ModelError::InvalidParameter(format!(
                    "box bounds at index {i}: lower {lo} exceeds upper {hi}"
                )));
            }
        }
        Ok(ConstraintSet::Box { lower, upper })
    }

    pub fn is_unbounded(&self) -> bool {
        matches!(self, ConstraintSet::Unbounded)
    }

    /// Dimension of a box set, `None` for the unbounded set.
    pub fn dim(&self) -> Option<usize> {
        match self {
            ConstraintSet::Unbounded => None,
            ConstraintSet::Box { lower, .. } => Some(lower.len()),
        }
    }

    pub fn contains(&self, v: &DVector<f64>, tol: f64) -> bool {
        match self {
            ConstraintSet::Unbounded => true,
            ConstraintSet::Box { lower, upper } => v
                .iter()
                .zip(lower.iter().zip(upper.iter()))
                .all(|(x, (lo, hi))| *x >= lo - tol && *x <= hi + tol),
        }
    }

    /// Nearest point of the set in the Euclidean norm.
    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            ConstraintSet::Unbounded => v.clone(),
            ConstraintSet::Box { lower, upper } => DVector::from_iterator(
                v.len(),
                v.iter()
                    .zip(lower.iter().zip(upper.iter()))
                    .map(|(x, (lo, hi))| x.clamp(*lo, *hi)),
            ),
        }
    }

    /// Signed componentwise bound violations `x - upper` and `lower - x` for
    /// finite bounds; feasible iff every entry is `<= 0`. Returns
    /// `(component, sign, value)` where `sign` is the derivative of the entry
    /// with respect to the component.
    pub fn signed_violations(&self, v: &DVector<f64>) -> Vec<(usize, f64, f64)> {
        match self {
            ConstraintSet::Unbounded => Vec::new(),
            ConstraintSet::Box { lower, upper } => {
                let mut out = Vec::new();
                for i in 0..v.len() {
                    if upper[i].is_finite() {
                        out.push((i, 1.0, v[i] - upper[i]));
                    }
                    if lower[i].is_finite() {
                        out.push((i, -1.0, lower[i] - v[i]));
                    }
                }
                out
            }
        }
    }

    /// Number of entries [`signed_violations`](Self::signed_violations) yields.
    pub fn violation_count(&self) -> usize {
        match self {
            ConstraintSet::Unbounded => 0,
            ConstraintSet::Box { lower, upper } => {
                lower.iter().filter(|b| b.is_finite()).count()
                    + upper.iter().filter(|b| b.is_finite()).count()
            }
        }
    }
}
