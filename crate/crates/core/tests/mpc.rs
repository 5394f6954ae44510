use std::sync::Arc;

use fsmpc_core::analysis::max_deviation_post_transient;
use fsmpc_core::model::FsClf;
use fsmpc_core::mpc::*;
use fsmpc_core::benchmark;
use fsmpc_core::solver::SolverConfig;
use nalgebra::DVector;

fn v6() -> FsClf {
    benchmark::fsclf(6).unwrap()
}

fn nominal(alg: Algorithm, t: usize) -> ClosedLoopResult {
    let cfg = ClosedLoopConfig::new(alg, 6, t);
    let sys = benchmark::nominal_system();
    run_with_registry(&SchemeRegistry::with_builtin(), &sys, &sys, &v6(), &benchmark::initial_state(), &cfg).unwrap()
}

fn perturbed(alg: Algorithm, policy: InfeasibilityPolicy) -> Result<ClosedLoopResult, MpcError> {
    let cfg = ClosedLoopConfig::new(alg, 6, 100).with_infeasibility_policy(policy);
    run_with_registry(
        &SchemeRegistry::with_builtin(),
        &benchmark::perturbed_system(),
        &benchmark::nominal_system(),
        &v6(),
        &benchmark::initial_state(),
        &cfg,
    )
}

#[test]
fn multi_step_contraction_chain() {
    let r = nominal(Algorithm::MultiStep, 60);
    for k in 0..=10 {
        assert!(r.v_values[6 * k] <= 0.9f64.powi(k as i32) * 3.0 + 1e-5, "k={k}");
    }
    assert!(r.trajectory.states[60].norm() < 1e-2);
    assert_eq!(r.cycle_anchors.len(), 10);
}

#[test]
fn cycle_contraction_for_both_contractive_schemes() {
    for alg in [Algorithm::MultiStep, Algorithm::ShrinkingUpdated] {
        let r = nominal(alg, 60);
        for k in 0..10 {
            assert!(r.v_values[6 * (k + 1)] <= 0.9 * r.v_values[6 * k] + 1e-6, "{alg:?} cycle {k}");
        }
    }
}

#[test]
fn solve_counts_and_horizons() {
    let m = nominal(Algorithm::MultiStep, 100);
    assert_eq!(m.solves.len(), 17);
    assert!(m.solves.iter().all(|s| s.horizon == 6 && s.time % 6 == 0));

    let s = nominal(Algorithm::ShrinkingUpdated, 100);
    assert_eq!(s.solves.len(), 100);
    for (t, rec) in s.solves.iter().enumerate() {
        assert_eq!(rec.horizon, 6 - t % 6);
        assert_eq!(rec.anchor.is_some(), t % 6 == 0);
    }

    let c = nominal(Algorithm::Classic, 100);
    assert_eq!(c.solves.len(), 100);
    assert!(c.solves.iter().all(|s| s.horizon == 6));
}

#[test]
fn multi_step_and_shrinking_coincide_without_disturbance() {
    let a = nominal(Algorithm::MultiStep, 60);
    let b = nominal(Algorithm::ShrinkingUpdated, 60);
    let dist = a
        .trajectory
        .states
        .iter()
        .zip(&b.trajectory.states)
        .map(|(p, q)| (p - q).amax())
        .fold(0.0, f64::max);
    assert!(dist <= 1e-4, "{dist}");
}

#[test]
fn classic_converges_on_the_nominal_system() {
    let r = nominal(Algorithm::Classic, 100);
    assert!(r.v_values.iter().skip(30).all(|v| *v < 1e-2));
}

#[test]
fn origin_stays_put() {
    let sys = benchmark::nominal_system();
    for alg in Algorithm::ALL {
        let cfg = ClosedLoopConfig::new(alg, 6, 20);
        let r = run_with_registry(&SchemeRegistry::with_builtin(), &sys, &sys, &v6(), &DVector::zeros(3), &cfg).unwrap();
        assert!(r.trajectory.states.iter().all(|x| x.amax() == 0.0), "{alg:?}");
    }
}

#[test]
fn solves_start_from_the_measured_state() {
    for alg in Algorithm::ALL {
        let r = perturbed(alg, InfeasibilityPolicy::RestartCycle).unwrap();
        for rec in &r.solves {
            assert_eq!(rec.initial_state, r.trajectory.states[rec.time]);
        }
    }
}

#[test]
fn shrinking_under_disturbance_surfaces_infeasibility_by_default() {
    match perturbed(Algorithm::ShrinkingUpdated, InfeasibilityPolicy::Error) {
        Err(MpcError::Infeasible { time, offset, residual, .. }) => {
            assert!(offset > 0 && time % 6 == offset);
            assert!(residual > 1e-6);
        }
        other => panic!("expected an infeasible solve, got {:?}", other.map(|r| r.solves.len())),
    }
}

#[test]
fn fallback_policies_are_recorded() {
    let restart = perturbed(Algorithm::ShrinkingUpdated, InfeasibilityPolicy::RestartCycle).unwrap();
    assert!(restart.fallback_count(Fallback::RestartedCycle) > 0);
    assert_eq!(restart.fallback_count(Fallback::BestEffort), 0);
    for rec in &restart.solves {
        assert!(rec.contraction_residual <= 1e-6, "t={}", rec.time);
        if rec.fallback == Some(Fallback::RestartedCycle) {
            assert_eq!(rec.offset, 0);
            assert_eq!(rec.horizon, 6);
            assert!(rec.anchor.is_some());
        }
    }

    let best = perturbed(Algorithm::ShrinkingUpdated, InfeasibilityPolicy::BestEffort).unwrap();
    let flagged: Vec<_> = best.solves.iter().filter(|s| s.fallback == Some(Fallback::BestEffort)).collect();
    assert!(!flagged.is_empty());
    assert!(flagged.iter().all(|s| s.contraction_residual > 1e-6 && !s.status.is_usable()));
}

#[test]
fn classic_disturbance_response() {
    let r = perturbed(Algorithm::Classic, InfeasibilityPolicy::Error).unwrap();
    let dev = max_deviation_post_transient(&r.trajectory, 0, 36).unwrap();
    assert!((dev - 0.363).abs() <= 0.1 * 0.363, "{dev}");
}

#[test]
fn deviation_is_stable_once_past_the_transient() {
    for alg in Algorithm::ALL {
        let r = perturbed(alg, InfeasibilityPolicy::RestartCycle).unwrap();
        let base = max_deviation_post_transient(&r.trajectory, 0, 36).unwrap();
        for w in [48, 60] {
            let d = max_deviation_post_transient(&r.trajectory, 0, w).unwrap();
            assert!((d - base).abs() <= 0.05 * base, "{alg:?} window {w}: {d} vs {base}");
        }
    }
}

#[test]
fn runs_are_deterministic() {
    let a = perturbed(Algorithm::ShrinkingUpdated, InfeasibilityPolicy::RestartCycle).unwrap();
    let b = perturbed(Algorithm::ShrinkingUpdated, InfeasibilityPolicy::RestartCycle).unwrap();
    assert_eq!(a.trajectory, b.trajectory);
}

#[test]
fn invalid_configurations() {
    let sys = benchmark::nominal_system();
    let x0 = benchmark::initial_state();
    let reg = SchemeRegistry::with_builtin();
    let zero_steps = ClosedLoopConfig::new(Algorithm::Classic, 6, 0);
    assert!(matches!(run_with_registry(&reg, &sys, &sys, &v6(), &x0, &zero_steps), Err(MpcError::InvalidConfig(_))));
    let mismatch = ClosedLoopConfig::new(Algorithm::MultiStep, 4, 10);
    assert!(matches!(run_with_registry(&reg, &sys, &sys, &v6(), &x0, &mismatch), Err(MpcError::InvalidConfig(_))));
    let bad_solver = ClosedLoopConfig::new(Algorithm::Classic, 6, 10).with_solver(SolverConfig {
        feasibility_tol: -1.0,
        ..SolverConfig::default()
    });
    assert!(run_with_registry(&reg, &sys, &sys, &v6(), &x0, &bad_solver).is_err());
    let mut unknown = ClosedLoopConfig::new(Algorithm::Classic, 6, 10);
    unknown.scheme = "tube".into();
    assert!(matches!(run_with_registry(&reg, &sys, &sys, &v6(), &x0, &unknown), Err(MpcError::UnknownScheme(_))));
    assert!(run_classic(&sys, &sys, &v6(), &DVector::zeros(2), &ClosedLoopConfig::new(Algorithm::Classic, 6, 10)).is_err());
}

/// Applies a fixed linear feedback; exercises registration of outside schemes.
struct Feedback {
    gain: DVector<f64>,
}

impl MpcScheme for Feedback {
    fn name(&self) -> &str {
        "feedback"
    }

    fn horizon(&self) -> usize {
        1
    }

    fn plan(&mut self, _: &SchemeContext<'_>, t: usize, measured: &DVector<f64>) -> Result<Plan, MpcError> {
        let u = DVector::from_element(1, -self.gain.dot(measured));
        Ok(Plan {
            inputs: vec![u],
            record: SolveRecord {
                time: t,
                cycle: t,
                offset: 0,
                horizon: 1,
                status: fsmpc_core::solver::SolveStatus::Optimal,
                outer_iterations: 0,
                inner_iterations: 0,
                cost: 0.0,
                contraction_residual: 0.0,
                wall_time_secs: 0.0,
                initial_state: measured.clone(),
                anchor: None,
                retried: false,
                fallback: None,
            },
        })
    }
}

#[test]
fn registry_accepts_custom_schemes() {
    let mut reg = SchemeRegistry::with_builtin();
    let names: Vec<String> = reg.list().into_iter().map(|i| i.name).collect();
    assert_eq!(names, ["classic", "multi-step", "shrinking-updated"]);
    // deadbeat gain for the benchmark chain: (A - B k)^3 = 0
    reg.register(
        "feedback",
        "deadbeat state feedback",
        Arc::new(|_, _| Ok(Box::new(Feedback { gain: DVector::from_vec(vec![1.0, 3.0, 3.5]) }) as Box<dyn MpcScheme>)),
    );
    assert!(reg.contains("feedback"));
    let mut cfg = ClosedLoopConfig::new(Algorithm::Classic, 1, 5);
    cfg.scheme = "feedback".into();
    let sys = benchmark::nominal_system();
    let r = run_with_registry(&reg, &sys, &sys, &v6(), &benchmark::initial_state(), &cfg).unwrap();
    assert!(r.trajectory.states[3].amax() < 1e-12);
}
