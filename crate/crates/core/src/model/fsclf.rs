use nalgebra::{DMatrix, DVector};

use super::comparison::default_grid;
use super::{check_dim, ComparisonFunction, MeasurementFunction, ModelError};

/// Functional form of the Lyapunov candidate `V`.
#[derive(Debug, Clone, PartialEq)]
pub enum LyapunovCandidate {
    /// `V(x) = x^T P x` for symmetric positive semidefinite `P`.
    Quadratic(DMatrix<f64>),
    /// `V(x) = omega(x)`.
    Measurement,
}

/// Finite-step control Lyapunov function candidate: `V` together with its
/// sandwich bounds `lower(omega(x)) <= V(x) <= upper(omega(x))`, decay
/// function `alpha < id` and step count `M`.
#[derive(Debug, Clone)]
pub struct FsClf {
    pub candidate: LyapunovCandidate,
    pub omega: MeasurementFunction,
    pub lower: ComparisonFunction,
    pub upper: ComparisonFunction,
    pub decay: ComparisonFunction,
    pub steps: usize,
}

const SYMMETRY_TOL: f64 = 1e-12;

impl FsClf {
    /// Quadratic candidate measured by the Euclidean norm, with the sandwich
    /// bounds `lambda_min |x|^2 <= V <= lambda_max |x|^2`.
    pub fn quadratic(p: DMatrix<f64>, decay: ComparisonFunction, steps: usize) -> Result<Self, ModelError> {
        if !p.is_square() || p.nrows() == 0 {
            return Err(ModelError::InvalidParameter(format!(
                "P must be a nonempty square matrix, got {}x{}",
                p.nrows(),
                p.ncols()
            )));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidParameter("P must be finite".into()));
        }
        let scale = p.amax().max(1.0);
        if (&p - p.transpose()).amax() > SYMMETRY_TOL * scale {
            return Err(ModelError::InvalidParameter("P must be symmetric".into()));
        }
        let eig = p.clone().symmetric_eigen().eigenvalues;
        let lmin = eig.min();
        let lmax = eig.max();
        if lmin < -SYMMETRY_TOL * scale {
            return Err(ModelError::InvalidParameter(format!(
                "P must be positive semidefinite, smallest eigenvalue {lmin}"
            )));
        }
        let lower = if lmin > 0.0 {
            ComparisonFunction::PowerMax { q: lmin, a: 2.0, b: 2.0 }
        } else {
            // only semidefinite: no class-K lower bound in the Euclidean norm
            ComparisonFunction::Linear(0.0)
        };
        let upper = ComparisonFunction::PowerMax { q: lmax.max(f64::MIN_POSITIVE), a: 2.0, b: 2.0 };
        Self::new(
            LyapunovCandidate::Quadratic(p),
            MeasurementFunction::EuclideanNorm,
            lower,
            upper,
            decay,
            steps,
        )
    }

    /// `V := omega` with identity sandwich bounds.
    pub fn measurement(omega: MeasurementFunction, decay: ComparisonFunction, steps: usize) -> Result<Self, ModelError> {
        Self::new(
            LyapunovCandidate::Measurement,
            omega,
            ComparisonFunction::identity(),
            ComparisonFunction::identity(),
            decay,
            steps,
        )
    }

    pub fn new(
        candidate: LyapunovCandidate,
        omega: MeasurementFunction,
        lower: ComparisonFunction,
        upper: ComparisonFunction,
        decay: ComparisonFunction,
        steps: usize,
    ) -> Result<Self, ModelError> {
        if steps == 0 {
            return Err(ModelError::InvalidParameter("step count M must be at least 1".into()));
        }
        if !decay.is_below_identity_on(&default_grid()) {
            return Err(ModelError::InvalidParameter(
                "decay function must satisfy alpha(s) < s".into(),
            ));
        }
        Ok(Self { candidate, omega, lower, upper, decay, steps })
    }

    /// Same candidate with a different step count.
    pub fn with_steps(&self, steps: usize) -> Result<Self, ModelError> {
        let mut out = self.clone();
        if steps == 0 {
            return Err(ModelError::InvalidParameter("step count M must be at least 1".into()));
        }
        out.steps = steps;
        Ok(out)
    }

    /// State dimension fixed by the candidate, if any.
    pub fn state_dim(&self) -> Option<usize> {
        match &self.candidate {
            LyapunovCandidate::Quadratic(p) => Some(p.nrows()),
            LyapunovCandidate::Measurement => None,
        }
    }

    /// `V(x)` with a dimension check.
    pub fn eval_v(&self, x: &DVector<f64>) -> Result<f64, ModelError> {
        if let Some(n) = self.state_dim() {
            check_dim("state", n, x.len())?;
        }
        Ok(self.value(x))
    }

    /// `V(x)`; the caller guarantees matching dimensions.
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        match &self.candidate {
            LyapunovCandidate::Quadratic(p) => x.dot(&(p * x)).max(0.0),
            LyapunovCandidate::Measurement => self.omega.eval(x),
        }
    }

    pub fn gradient(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        match &self.candidate {
            LyapunovCandidate::Quadratic(p) => Some(2.0 * (p * x)),
            LyapunovCandidate::Measurement => self.omega.gradient(x),
        }
    }

    /// `alpha(anchor)`: the contraction target.
    pub fn decay_target(&self, anchor: f64) -> f64 {
        self.decay.eval(anchor)
    }

    /// Whether `lower(omega(x)) <= V(x) <= upper(omega(x))` holds at `x`, with
    /// relative slack `rel_tol`.
    pub fn sandwich_holds(&self, x: &DVector<f64>, rel_tol: f64) -> bool {
        let w = self.omega.eval(x);
        let v = self.value(x);
        let lo = self.lower.eval(w);
        let hi = self.upper.eval(w);
        lo <= v + rel_tol * v.max(lo) && v <= hi + rel_tol * hi.max(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmark;
    use proptest::prelude::*;

    #[test]
    fn candidate_at_initial_state() {
        // hand evaluation: Px = (-0.75, 1.25, 1.0), x.Px = 0.75 + 1.25 + 1.0
        let v = benchmark::fsclf(6).unwrap();
        assert_eq!(v.eval_v(&benchmark::initial_state()).unwrap(), 3.0);
    }

    #[test]
    fn trivial_values() {
        let v = FsClf::quadratic(DMatrix::identity(3, 3), ComparisonFunction::Linear(0.9), 1).unwrap();
        assert_eq!(v.eval_v(&DVector::from_vec(vec![3.0, 4.0, 0.0])).unwrap(), 25.0);
        assert_eq!(v.eval_v(&DVector::zeros(3)).unwrap(), 0.0);
        assert_eq!(benchmark::fsclf(6).unwrap().eval_v(&DVector::zeros(3)).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch() {
        let v = benchmark::fsclf(6).unwrap();
        assert!(matches!(
            v.eval_v(&DVector::zeros(2)),
            Err(ModelError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn validation() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(FsClf::quadratic(asym, ComparisonFunction::Linear(0.9), 3).is_err());
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(FsClf::quadratic(indefinite, ComparisonFunction::Linear(0.9), 3).is_err());
        assert!(FsClf::quadratic(DMatrix::identity(2, 2), ComparisonFunction::Linear(1.0), 3).is_err());
        assert!(FsClf::quadratic(DMatrix::identity(2, 2), ComparisonFunction::Linear(0.5), 0).is_err());
    }

    #[test]
    fn measurement_passthrough() {
        let v = FsClf::measurement(MeasurementFunction::EuclideanNorm, ComparisonFunction::Linear(0.5), 2).unwrap();
        let x = DVector::from_vec(vec![3.0, 4.0]);
        assert_eq!(v.value(&x), 5.0);
        assert!(v.sandwich_holds(&x, 0.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn sandwich_bounds(x in proptest::collection::vec(-10.0f64..10.0, 3)) {
            let v = benchmark::fsclf(6).unwrap();
            let x = DVector::from_vec(x);
            prop_assert!(v.sandwich_holds(&x, 1e-12));
            prop_assert!(v.value(&x) >= 0.0);
        }
    }
}
