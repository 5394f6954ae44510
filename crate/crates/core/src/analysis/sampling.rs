use nalgebra::DVector;

use super::AnalysisError;
use crate::model::FsClf;

/// `count` deterministic unit vectors in `R^n`.
///
/// `n = 3` uses the golden-angle spiral, `n = 2` equally spaced angles and
/// `n = 1` alternates `+1, -1`. Higher dimensions normalize points of the
/// additive recurrence `frac(k * phi_n^-j)` (a Kronecker lattice), which is
/// low discrepancy on the cube and only roughly uniform on the sphere.
pub fn fibonacci_sphere(n: usize, count: usize) -> Vec<DVector<f64>> {
    match n {
        0 => Vec::new(),
        1 => (0..count)
            .map(|k| DVector::from_element(1, if k % 2 == 0 { 1.0 } else { -1.0 }))
            .collect(),
        2 => (0..count)
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / count as f64;
                DVector::from_vec(vec![a.cos(), a.sin()])
            })
            .collect(),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|k| {
                    let z = 1.0 - (2.0 * k as f64 + 1.0) / count as f64;
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let a = golden * k as f64;
                    DVector::from_vec(vec![r * a.cos(), r * a.sin(), z])
                })
                .collect()
        }
        _ => {
            // phi_n is the positive root of x^(n+1) = x + 1
            let mut phi = 2.0_f64;
            for _ in 0..64 {
                phi = (1.0 + phi).powf(1.0 / (n as f64 + 1.0));
            }
            let alphas: Vec<f64> = (1..=n).map(|j| phi.powi(-(j as i32)).fract()).collect();
            let mut out = Vec::with_capacity(count);
            let mut k = 1usize;
            while out.len() < count {
                let v = DVector::from_iterator(n, alphas.iter().map(|a| 2.0 * (0.5 + a * k as f64).fract() - 1.0));
                let norm = v.norm();
                if norm > 1e-3 {
                    out.push(v / norm);
                }
                k += 1;
            }
            out
        }
    }
}

/// Points on the level set `V = level` along the directions of
/// [`fibonacci_sphere`], found by radial bisection.
///
/// For homogeneous problems (linear dynamics, quadratic `V`) certifying the
/// unit level set certifies every level set, since both the achievable ratio
/// and the feasibility of the contraction constraint are scale invariant.
pub fn level_set_samples(fsclf: &FsClf, n: usize, count: usize, level: f64) -> Result<Vec<DVector<f64>>, AnalysisError> {
    if !(level.is_finite() && level > 0.0) {
        return Err(AnalysisError::InvalidInput(format!("level must be positive, got {level}")));
    }
    project_to_level_set(fsclf, fibonacci_sphere(n, count), level)
}

/// Scales each nonzero direction onto `V = level` by radial bisection.
pub fn project_to_level_set(fsclf: &FsClf, dirs: Vec<DVector<f64>>, level: f64) -> Result<Vec<DVector<f64>>, AnalysisError> {
    if !(level.is_finite() && level > 0.0) {
        return Err(AnalysisError::InvalidInput(format!("level must be positive, got {level}")));
    }
    dirs.into_iter()
        .map(|dir| {
            let norm = dir.norm();
            if !(norm.is_finite() && norm > 0.0) {
                return Err(AnalysisError::InvalidInput("sample direction must be nonzero and finite".into()));
            }
            let dir = dir / norm;
            radial_scale(fsclf, &dir, level).map(|s| dir * s)
        })
        .collect()
}

fn radial_scale(fsclf: &FsClf, dir: &DVector<f64>, level: f64) -> Result<f64, AnalysisError> {
    let v = |s: f64| fsclf.value(&(dir * s));
    let mut hi = 1.0;
    let mut doublings = 0;
    while v(hi) < level {
        hi *= 2.0;
        doublings += 1;
        if doublings > 200 {
            return Err(AnalysisError::InvalidInput("V does not reach the level along a sample direction".into()));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if v(mid) < level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}
