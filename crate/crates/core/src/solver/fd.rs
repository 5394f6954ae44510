use nalgebra::DVector;

use super::SolverError;

/// Central-difference gradient with per-coordinate step `fd_step * (1 + |x_i|)`.
pub fn finite_diff_gradient<F>(f: F, x: &DVector<f64>, fd_step: f64) -> Result<DVector<f64>, SolverError>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let mut grad = DVector::zeros(x.len());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let h = fd_step * (1.0 + x[i].abs());
        probe[i] = x[i] + h;
        let fp = f(&probe);
        probe[i] = x[i] - h;
        let fm = f(&probe);
        probe[i] = x[i];
        if !(fp.is_finite() && fm.is_finite()) {
            return Err(SolverError::NonFiniteEvaluation { coordinate: Some(i) });
        }
        grad[i] = (fp - fm) / (2.0 * h);
    }
    Ok(grad)
}
