//! Projected BFGS with backtracking (Armijo) line search on a box.

use nalgebra::{DMatrix, DVector};

pub(crate) const ARMIJO_C1: f64 = 1e-4;
pub(crate) const BACKTRACK: f64 = 0.5;
const MIN_STEP: f64 = 1e-20;

pub(crate) struct Bounds<'a> {
    pub lower: &'a DVector<f64>,
    pub upper: &'a DVector<f64>,
}

impl Bounds<'_> {
    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            x.len(),
            x.iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .map(|(v, (lo, hi))| v.clamp(*lo, *hi)),
        )
    }
}

#[derive(Debug)]
pub(crate) struct InnerOutcome {
    pub x: DVector<f64>,
    pub value: f64,
    pub iterations: usize,
    /// Infinity norm of the projected gradient step `P(x - g) - x`.
    pub stationarity: f64,
    pub converged: bool,
}

fn projected_gradient_norm(x: &DVector<f64>, g: &DVector<f64>, bounds: &Bounds) -> f64 {
    (bounds.project(&(x - g)) - x).amax()
}

/// Minimizes `phi` over the box from `x0`. `grad` may fail (non-finite
/// evaluation); such a point is treated like a rejected line-search trial.
pub(crate) fn minimize<F, G>(
    phi: F,
    grad: G,
    x0: &DVector<f64>,
    bounds: &Bounds,
    max_iters: usize,
    tol: f64,
) -> InnerOutcome
where
    F: Fn(&DVector<f64>) -> f64,
    G: Fn(&DVector<f64>) -> Option<DVector<f64>>,
{
    let n = x0.len();
    let mut x = bounds.project(x0);
    let mut f = phi(&x);
    let mut g = match grad(&x) {
        Some(g) => g,
        None => {
            return InnerOutcome { x, value: f, iterations: 0, stationarity: f64::INFINITY, converged: false };
        }
    };
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut fresh = true;
    let mut iterations = 0;
    let mut stationarity = projected_gradient_norm(&x, &g, bounds);

    while iterations < max_iters {
        if stationarity <= tol * f.abs().max(1.0) {
            return InnerOutcome { x, value: f, iterations, stationarity, converged: true };
        }
        iterations += 1;

        // variables held at a bound by the gradient stay fixed
        let held: Vec<bool> = (0..n)
            .map(|i| (x[i] <= bounds.lower[i] && g[i] > 0.0) || (x[i] >= bounds.upper[i] && g[i] < 0.0))
            .collect();
        let mut d = -(&h * &g);
        for i in 0..n {
            if held[i] {
                d[i] = 0.0;
            }
        }
        if g.dot(&d) >= 0.0 {
            h = DMatrix::identity(n, n);
            fresh = true;
            d = -g.clone();
            for i in 0..n {
                if held[i] {
                    d[i] = 0.0;
                }
            }
        }

        let mut accepted = None;
        let mut t = 1.0;
        while t >= MIN_STEP {
            let trial = bounds.project(&(&x + t * &d));
            let ft = phi(&trial);
            if ft.is_finite() && ft <= f + ARMIJO_C1 * g.dot(&(&trial - &x)) {
                if let Some(gt) = grad(&trial) {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            t *= BACKTRACK;
        }

        let Some((xt, ft, gt)) = accepted else {
            if fresh {
                // steepest descent cannot make progress either
                break;
            }
            h = DMatrix::identity(n, n);
            fresh = true;
            continue;
        };

        let s = &xt - &x;
        let y = &gt - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() && sy > 0.0 {
            if fresh {
                h *= sy / y.dot(&y);
                fresh = false;
            }
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            // H+ = H - rho (s hy^T + hy s^T) + (rho^2 yHy + rho) s s^T
            h -= rho * (&s * hy.transpose() + &hy * s.transpose());
            h += (rho * rho * yhy + rho) * (&s * s.transpose());
        }
        let moved = s.amax();
        x = xt;
        f = ft;
        g = gt;
        stationarity = projected_gradient_norm(&x, &g, bounds);
        if moved == 0.0 {
            break;
        }
    }
    let converged = stationarity <= tol * f.abs().max(1.0);
    InnerOutcome { x, value: f, iterations, stationarity, converged }
}
