use fsmpc_core::analysis::*;
use fsmpc_core::model::{rollout, ComparisonFunction, ControlSequence, ControlSystem, FsClf};
use fsmpc_core::mpc::{run_classic, run_multistep, Algorithm, ClosedLoopConfig};
use fsmpc_core::ocp::optimal_value_vn;
use fsmpc_core::benchmark;
use fsmpc_core::solver::SolverConfig;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn samples(steps: usize) -> (FsClf, Vec<DVector<f64>>) {
    let v = benchmark::fsclf(steps).unwrap();
    let s = level_set_samples(&v, 3, 64, 1.0).unwrap();
    (v, s)
}

/// Best one-step ratio `min_u V(A xi + B u) / V(xi)` by a coarse grid and a
/// golden-section refinement.
fn one_step_oracle(xi: &DVector<f64>) -> f64 {
    let p = benchmark::p_matrix();
    let a = benchmark::system_matrix();
    let b = benchmark::input_matrix();
    let v = |x: &DVector<f64>| (x.transpose() * &p * x)[(0, 0)];
    let f = |u: f64| v(&(&a * xi + &b * DVector::from_element(1, u)));
    let grid: Vec<f64> = (-4000..=4000).map(|k| k as f64 * 0.01).collect();
    let mut best = grid.iter().copied().fold(0.0, |acc, u| if f(u) < f(acc) { u } else { acc });
    let (mut lo, mut hi) = (best - 0.01, best + 0.01);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let m1 = hi - g * (hi - lo);
        let m2 = lo + g * (hi - lo);
        if f(m1) < f(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
        best = 0.5 * (lo + hi);
    }
    f(best) / v(xi)
}

#[test]
fn candidate_is_certified_for_three_steps() {
    let (v, s) = samples(3);
    let r = certify_fsclf(&benchmark::nominal_system(), &v, &s, &CertificationConfig::default()).unwrap();
    assert_eq!(r.verdict, Verdict::Certified);
    assert_eq!(r.feasible_count, 64);
    assert!(r.max_ratio < 1.0 - DEFAULT_MARGIN);
    assert!(r.max_ratio <= 0.9 + 1e-6);
}

#[test]
fn one_step_certification_fails_where_the_oracle_says() {
    let (v, s) = samples(1);
    let r = certify_fsclf(&benchmark::nominal_system(), &v, &s, &CertificationConfig::default()).unwrap();
    assert_eq!(r.verdict, Verdict::NotCertified);
    let mut oracle_failures = Vec::new();
    for (i, (xi, rec)) in s.iter().zip(&r.records).enumerate() {
        let best = one_step_oracle(xi);
        let reported = rec.best_ratio.unwrap();
        assert!((reported - best).abs() <= 1e-6 * best.max(1.0), "sample {i}: {reported} vs {best}");
        if best > 0.9 + 1e-6 {
            oracle_failures.push(i);
            assert!(!rec.feasible);
        }
    }
    assert!(!oracle_failures.is_empty());
    for i in &oracle_failures {
        assert!(r.failing_samples.contains(i));
    }
}

#[test]
fn origin_sample_has_ratio_zero() {
    let v = benchmark::fsclf(3).unwrap();
    let r = certify_fsclf(&benchmark::nominal_system(), &v, &[DVector::zeros(3)], &CertificationConfig::default()).unwrap();
    assert!(r.records[0].feasible);
    assert_eq!(r.records[0].ratio, 0.0);
    assert!(certify_fsclf(&benchmark::nominal_system(), &v, &[], &CertificationConfig::default()).is_err());
}

#[test]
fn doubling_the_step_count_squares_the_ratio() {
    let sys = benchmark::nominal_system();
    let (v3, s) = samples(3);
    let r3 = certify_fsclf(&sys, &v3, &s, &CertificationConfig::default()).unwrap();
    let r6 = certify_fsclf(&sys, &v3.with_steps(6).unwrap(), &s, &CertificationConfig::default()).unwrap();
    assert_eq!(r6.verdict, Verdict::Certified);
    assert!(r6.max_ratio <= r3.max_ratio.powi(2) + 1e-6);
}

#[test]
fn decay_check_on_closed_loops() {
    let sys = benchmark::nominal_system();
    let v = benchmark::fsclf(6).unwrap();
    let r = run_multistep(&sys, &sys, &v, &benchmark::initial_state(), &ClosedLoopConfig::new(Algorithm::MultiStep, 6, 60)).unwrap();
    let chk = converse_decay_check(&r.trajectory, |x| v.value(x), 6).unwrap();
    assert!(chk.satisfied);
    assert!(chk.lambda_hat.unwrap() <= 0.9 + 1e-6);

    let open = rollout(&sys, &benchmark::initial_state(), &ControlSequence::zeros(1, 30), 0).unwrap();
    assert!(!converse_decay_check(&open, |x| x.norm(), 6).unwrap().satisfied);
}

#[test]
fn envelope_of_the_nominal_multi_step_run() {
    let sys = benchmark::nominal_system();
    let v = benchmark::fsclf(6).unwrap();
    let r = run_multistep(&sys, &sys, &v, &benchmark::initial_state(), &ClosedLoopConfig::new(Algorithm::MultiStep, 6, 60)).unwrap();
    let fit = fit_exponential_envelope(&r.v_values).unwrap();
    assert!(fit.exponential);
    assert!(fit.sigma <= 0.9f64.powf(1.0 / 6.0) + 0.02, "{}", fit.sigma);
    for (t, w) in r.v_values.iter().enumerate().take(fit.fitted_len) {
        assert!(*w <= fit.c * fit.sigma.powi(t as i32) * r.v_values[0] * (1.0 + 1e-9));
    }
}

#[test]
fn fitted_constants_for_the_benchmark() {
    let sys = benchmark::nominal_system();
    let (v, s) = samples(6);
    let tc = fit_transient_constants(&sys, &v, &s, &SolverConfig::default()).unwrap();
    assert!(tc.c <= 0.9 + 1e-6);
    assert!(tc.d > 0.0);
    assert!((tc.gamma - 6.0 * tc.d / (1.0 - tc.c)).abs() < 1e-12);
    let n = horizon_bound(tc.gamma).unwrap();
    // the bound is sufficient, not necessary: N = 6 already stabilizes
    assert!(n >= 6);

    // growth of the value function stays under gamma V for N <= 2M
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let xi = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
        for horizon in 1..=12 {
            let vn = optimal_value_vn(&sys, &v, &xi, horizon, &SolverConfig::default()).unwrap();
            assert!(vn <= tc.gamma * v.value(&xi), "N={horizon}");
        }
    }
}

#[test]
fn fitting_needs_feasible_samples_off_the_origin() {
    let sys = benchmark::nominal_system();
    let (v1, s) = samples(1);
    assert!(matches!(
        fit_transient_constants(&sys, &v1, &s, &SolverConfig::default()),
        Err(AnalysisError::SampleInfeasible { .. })
    ));
    let v3 = benchmark::fsclf(3).unwrap();
    assert!(fit_transient_constants(&sys, &v3, &[DVector::zeros(3)], &SolverConfig::default()).is_err());
}

#[test]
fn contractive_plant_has_nonexpansive_transients() {
    let sys = ControlSystem::linear(DMatrix::identity(2, 2) * 0.5, DMatrix::identity(2, 2) * 0.2).unwrap();
    let v = FsClf::quadratic(DMatrix::identity(2, 2), ComparisonFunction::linear(0.9).unwrap(), 2).unwrap();
    let s = level_set_samples(&v, 2, 16, 1.0).unwrap();
    let tc = fit_transient_constants(&sys, &v, &s, &SolverConfig::default()).unwrap();
    assert!(tc.d > 0.0 && tc.d <= 1.0);
}

#[test]
fn horizon_pipeline_stabilizes_an_unstable_scalar_plant() {
    let sys = ControlSystem::linear(DMatrix::from_element(1, 1, 1.2), DMatrix::from_element(1, 1, 1.0)).unwrap();
    let v = FsClf::quadratic(DMatrix::from_element(1, 1, 1.0), ComparisonFunction::linear(0.5).unwrap(), 1).unwrap();
    let s = level_set_samples(&v, 1, 2, 1.0).unwrap();
    let tc = fit_transient_constants(&sys, &v, &s, &SolverConfig::default()).unwrap();
    let n = horizon_bound(tc.gamma).unwrap();
    let cfg = ClosedLoopConfig::new(Algorithm::Classic, n, 100);
    let r = run_classic(&sys, &sys, &v, &DVector::from_element(1, 3.0), &cfg).unwrap();
    assert!(*r.v_values.last().unwrap() < 1e-2);
}

#[test]
fn sampled_horizon_bound_is_monotone() {
    let mut prev = 0;
    for k in 11..=1000 {
        let n = horizon_bound(k as f64 / 10.0).unwrap();
        assert!(n >= prev);
        prev = n;
    }
    assert_eq!(horizon_bound(2.0).unwrap(), 3);
    assert_eq!(horizon_bound(4.0).unwrap(), 6);
}
