//! The four subcommands. Each returns a report and writes its files into the
//! output directory; `main` maps errors to exit codes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fsmpc_core::analysis::{
    certify_fsclf, converse_decay_check, fit_exponential_envelope, fit_transient_constants, horizon_bound,
    level_set_samples, max_deviation_post_transient, project_to_level_set, CertificationConfig,
    CertificationReport, DecayCheck, EnvelopeFit, HorizonBoundInputs, TransientConstants, Verdict,
};
use fsmpc_core::mpc::{run_with_registry, ClosedLoopResult, Fallback, InfeasibilityPolicy, SchemeRegistry};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{Scenario, ScenarioConfig, VariantConfig};
use crate::output::{aligned_csv, trajectory_csv, write_atomic, write_json};
use crate::CliError;

/// Command-line overrides shared by the config-driven commands.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    /// Feasibility tolerance; the optimality tolerance follows at 1e-2 of it.
    pub tol: Option<f64>,
}

impl Overrides {
    /// Applies the overrides to `cfg` and revalidates.
    pub fn apply(&self, cfg: &ScenarioConfig) -> Result<ScenarioConfig, CliError> {
        let mut cfg = cfg.clone();
        if let Some(tol) = self.tol {
            if !(tol.is_finite() && tol > 0.0) {
                return Err(CliError::Validation {
                    field: "--tol".into(),
                    message: format!("must be positive, got {tol}"),
                });
            }
            cfg.solver.feasibility_tol = Some(tol);
            cfg.solver.optimality_tol = Some(tol * 1e-2);
        }
        if self.seed.is_some() {
            cfg.seed = self.seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn out_dir(&self, cfg: &ScenarioConfig) -> PathBuf {
        self.out
            .clone()
            .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CycleStart {
    pub time: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveStats {
    pub count: usize,
    pub retried: usize,
    pub restarted_cycles: usize,
    pub best_effort: usize,
    pub statuses: BTreeMap<String, usize>,
    pub max_contraction_residual: f64,
    pub max_wall_time_secs: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveEntry {
    pub time: usize,
    pub cycle: usize,
    pub offset: usize,
    pub horizon: usize,
    pub status: String,
    pub iterations: usize,
    pub cost: f64,
    pub contraction_residual: f64,
    pub wall_time_secs: f64,
    pub anchor: Option<f64>,
    pub retried: bool,
    pub fallback: Option<Fallback>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub label: String,
    pub scheme: String,
    pub horizon: usize,
    pub on_infeasible: InfeasibilityPolicy,
    pub total_steps: usize,
    pub final_state: Vec<f64>,
    pub final_v: f64,
    pub cycle_starts: Vec<CycleStart>,
    pub window_start: usize,
    /// `max |x_i(t)|` over the post-transient window, per component.
    pub max_deviation: Vec<f64>,
    pub envelope: Option<EnvelopeFit>,
    pub solves: SolveStats,
    pub wall_time_secs: f64,
    pub records: Vec<SolveEntry>,
}

impl RunSummary {
    pub fn from_result(label: &str, cfg: &ScenarioConfig, variant: &VariantConfig, r: &ClosedLoopResult) -> Result<Self, CliError> {
        let n = r.trajectory.states[0].len();
        let max_deviation = (0..n)
            .map(|i| max_deviation_post_transient(&r.trajectory, i, cfg.transient_end))
            .collect::<Result<Vec<_>, _>>()?;
        let mut statuses = BTreeMap::new();
        for s in &r.solves {
            *statuses.entry(s.status.as_str().to_string()).or_insert(0) += 1;
        }
        let horizon = cfg.closed_loop(variant).horizon;
        let cycle_starts = r
            .solves
            .iter()
            .filter_map(|s| s.anchor.map(|value| CycleStart { time: s.time, value }))
            .collect();
        Ok(Self {
            label: label.to_string(),
            scheme: r.scheme.clone(),
            horizon,
            on_infeasible: variant.on_infeasible,
            total_steps: r.trajectory.len(),
            final_state: r.trajectory.final_state().iter().copied().collect(),
            final_v: *r.v_values.last().expect("nonempty trajectory"),
            cycle_starts,
            window_start: cfg.transient_end,
            max_deviation,
            envelope: fit_exponential_envelope(&r.v_values).ok(),
            solves: SolveStats {
                count: r.solves.len(),
                retried: r.solves.iter().filter(|s| s.retried).count(),
                restarted_cycles: r.fallback_count(Fallback::RestartedCycle),
                best_effort: r.fallback_count(Fallback::BestEffort),
                statuses,
                max_contraction_residual: r.solves.iter().map(|s| s.contraction_residual).fold(0.0, f64::max),
                max_wall_time_secs: r.solves.iter().map(|s| s.wall_time_secs).fold(0.0, f64::max),
            },
            wall_time_secs: r.total_wall_time_secs(),
            records: r
                .solves
                .iter()
                .map(|s| SolveEntry {
                    time: s.time,
                    cycle: s.cycle,
                    offset: s.offset,
                    horizon: s.horizon,
                    status: s.status.as_str().to_string(),
                    iterations: s.outer_iterations + s.inner_iterations,
                    cost: s.cost,
                    contraction_residual: s.contraction_residual,
                    wall_time_secs: s.wall_time_secs,
                    anchor: s.anchor,
                    retried: s.retried,
                    fallback: s.fallback,
                })
                .collect(),
        })
    }
}

pub struct RunOutput {
    pub result: ClosedLoopResult,
    pub summary: RunSummary,
    pub files: Vec<PathBuf>,
}

fn simulate(scenario: &Scenario, cfg: &ScenarioConfig, variant: &VariantConfig) -> Result<ClosedLoopResult, CliError> {
    let registry = SchemeRegistry::with_builtin();
    let config = cfg.closed_loop(variant);
    log::info!("running {} (horizon {})", variant.label(), config.horizon);
    Ok(run_with_registry(
        &registry,
        &scenario.plant,
        &scenario.model,
        &scenario.fsclf,
        &scenario.initial,
        &config,
    )?)
}

/// Closed loop for `cfg.algorithm`: `trajectory.csv` and `summary.json`.
pub fn run(cfg: &ScenarioConfig, overrides: &Overrides) -> Result<RunOutput, CliError> {
    let cfg = overrides.apply(cfg)?;
    let variant = cfg.algorithm.clone().ok_or_else(|| CliError::Validation {
        field: "algorithm".into(),
        message: "required by `run`".into(),
    })?;
    let scenario = cfg.build()?;
    let result = simulate(&scenario, &cfg, &variant)?;
    let summary = RunSummary::from_result(&variant.label(), &cfg, &variant, &result)?;
    let dir = overrides.out_dir(&cfg);
    let csv = dir.join("trajectory.csv");
    let json = dir.join("summary.json");
    write_atomic(&csv, trajectory_csv(&result).as_bytes())?;
    write_json(&json, &summary)?;
    Ok(RunOutput {
        result,
        summary,
        files: vec![csv, json],
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PairDistance {
    pub a: String,
    pub b: String,
    /// `max_t |x_a(t) - x_b(t)|_inf`.
    pub state_distance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Reduction {
    pub from: String,
    pub to: String,
    pub component: usize,
    /// `100 (from - to) / from` of the post-transient maximum deviation.
    pub percent: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub window_start: usize,
    pub variants: Vec<RunSummary>,
    pub distances: Vec<PairDistance>,
    pub reductions: Vec<Reduction>,
}

pub struct CompareOutput {
    pub results: Vec<(String, ClosedLoopResult)>,
    pub comparison: Comparison,
    pub files: Vec<PathBuf>,
}

pub fn sup_distance(a: &ClosedLoopResult, b: &ClosedLoopResult) -> f64 {
    a.trajectory
        .states
        .iter()
        .zip(&b.trajectory.states)
        .map(|(x, y)| (x - y).amax())
        .fold(0.0, f64::max)
}

/// Runs every entry of `cfg.variants` in parallel on the same scenario:
/// `comparison.csv` and `comparison.json`.
pub fn compare(cfg: &ScenarioConfig, overrides: &Overrides) -> Result<CompareOutput, CliError> {
    let cfg = overrides.apply(cfg)?;
    if cfg.variants.len() < 2 {
        return Err(CliError::Validation {
            field: "variants".into(),
            message: "`compare` needs at least two variants".into(),
        });
    }
    let scenario = cfg.build()?;
    let outcomes: Vec<Result<ClosedLoopResult, CliError>> = std::thread::scope(|s| {
        let handles: Vec<_> = cfg
            .variants
            .iter()
            .map(|v| {
                let (scenario, cfg) = (&scenario, &cfg);
                s.spawn(move || simulate(scenario, cfg, v))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("variant thread panicked")).collect()
    });
    let mut results = Vec::with_capacity(outcomes.len());
    for (v, r) in cfg.variants.iter().zip(outcomes) {
        let r = r.map_err(|e| match e {
            CliError::Infeasible(m) => CliError::Infeasible(format!("{}: {m}", v.label())),
            CliError::Solver(m) => CliError::Solver(format!("{}: {m}", v.label())),
            other => other,
        })?;
        results.push((v.label(), r));
    }

    let variants = cfg
        .variants
        .iter()
        .zip(&results)
        .map(|(v, (label, r))| RunSummary::from_result(label, &cfg, v, r))
        .collect::<Result<Vec<_>, _>>()?;
    let mut distances = Vec::new();
    let mut reductions = Vec::new();
    for i in 0..results.len() {
        for j in 0..results.len() {
            if i < j {
                distances.push(PairDistance {
                    a: results[i].0.clone(),
                    b: results[j].0.clone(),
                    state_distance: sup_distance(&results[i].1, &results[j].1),
                });
            }
            if i != j {
                for (k, (&from, &to)) in variants[i].max_deviation.iter().zip(&variants[j].max_deviation).enumerate() {
                    reductions.push(Reduction {
                        from: results[i].0.clone(),
                        to: results[j].0.clone(),
                        component: k,
                        percent: if from > 0.0 { 100.0 * (from - to) / from } else { 0.0 },
                    });
                }
            }
        }
    }
    let comparison = Comparison {
        window_start: cfg.transient_end,
        variants,
        distances,
        reductions,
    };
    let dir = overrides.out_dir(&cfg);
    let csv = dir.join("comparison.csv");
    let json = dir.join("comparison.json");
    let runs: Vec<(String, &ClosedLoopResult)> = results.iter().map(|(l, r)| (l.clone(), r)).collect();
    write_atomic(&csv, aligned_csv(&runs).as_bytes())?;
    write_json(&json, &comparison)?;
    Ok(CompareOutput {
        results,
        comparison,
        files: vec![csv, json],
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct HorizonReport {
    pub c: f64,
    pub d: f64,
    #[serde(rename = "M")]
    pub m: usize,
    pub gamma: f64,
    pub n_min: usize,
}

impl HorizonReport {
    pub fn new(inputs: HorizonBoundInputs) -> Result<Self, CliError> {
        let gamma = inputs.gamma();
        Ok(Self {
            c: inputs.c,
            d: inputs.d,
            m: inputs.m,
            gamma,
            n_min: horizon_bound(gamma)?,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Certification {
    pub level: f64,
    pub seed: Option<u64>,
    pub report: CertificationReport,
    /// Only computed for a certified candidate.
    pub transient: Option<TransientConstants>,
    pub horizon: Option<HorizonReport>,
    /// Decay of `V` along the configured closed loop, if `algorithm` is set.
    pub closed_loop_decay: Option<DecayCheck>,
}

pub struct VerifyOutput {
    pub certification: Certification,
    pub files: Vec<PathBuf>,
}

/// Sample states on `V = cfg.verify.level`. With a seed the deterministic
/// directions are rotated by a seeded random orthogonal matrix.
pub fn verification_samples(cfg: &ScenarioConfig, scenario: &Scenario) -> Result<Vec<DVector<f64>>, CliError> {
    let n = scenario.plant.state_dim();
    let (count, level) = (cfg.verify.samples, cfg.verify.level);
    let samples = match cfg.seed {
        None => level_set_samples(&scenario.fsclf, n, count, level)?,
        Some(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let q = g.qr().q();
            let dirs = fsmpc_core::analysis::fibonacci_sphere(n, count).into_iter().map(|d| &q * d).collect();
            project_to_level_set(&scenario.fsclf, dirs, level)?
        }
    };
    Ok(samples)
}

/// Certifies the candidate on sampled level-set states and writes
/// `certification.json`. A candidate that fails certification is reported
/// with [`CliError::NotCertified`] after the file is written.
pub fn verify(cfg: &ScenarioConfig, overrides: &Overrides) -> Result<VerifyOutput, CliError> {
    let cfg = overrides.apply(cfg)?;
    let scenario = cfg.build()?;
    let samples = verification_samples(&cfg, &scenario)?;
    let started = Instant::now();
    let report = certify_fsclf(
        &scenario.model,
        &scenario.fsclf,
        &samples,
        &CertificationConfig {
            solver: scenario.solver.clone(),
            margin: cfg.verify.margin,
        },
    )?;
    let (mut transient, mut horizon) = (None, None);
    if report.verdict == Verdict::Certified {
        let fit = fit_transient_constants(&scenario.model, &scenario.fsclf, &samples, &scenario.solver)?;
        horizon = Some(HorizonReport::new(fit.bound_inputs()?)?);
        transient = Some(fit);
    }
    let closed_loop_decay = match &cfg.algorithm {
        Some(v) => {
            let r = simulate(&scenario, &cfg, v)?;
            let fsclf = &scenario.fsclf;
            Some(converse_decay_check(&r.trajectory, |x| fsclf.value(x), fsclf.steps)?)
        }
        None => None,
    };
    log::info!("verification took {:.2}s", started.elapsed().as_secs_f64());
    let failing = report.failing_samples.len();
    let certification = Certification {
        level: cfg.verify.level,
        seed: cfg.seed,
        report,
        transient,
        horizon,
        closed_loop_decay,
    };
    let path = overrides.out_dir(&cfg).join("certification.json");
    write_json(&path, &certification)?;
    if failing > 0 {
        return Err(CliError::NotCertified {
            failing,
            samples: certification.report.samples,
        });
    }
    Ok(VerifyOutput {
        certification,
        files: vec![path],
    })
}

/// `N_min` from explicit constants.
pub fn bound(m: usize, c: f64, d: f64) -> Result<HorizonReport, CliError> {
    let inputs = HorizonBoundInputs::new(c, d, m).map_err(|e| CliError::Validation {
        field: "--M/--c/--d".into(),
        message: e.to_string(),
    })?;
    HorizonReport::new(inputs)
}

/// `N_min` from constants fitted on the verification samples of `cfg`.
pub fn bound_from_fit(cfg: &ScenarioConfig, overrides: &Overrides) -> Result<HorizonReport, CliError> {
    let cfg = overrides.apply(cfg)?;
    let scenario = cfg.build()?;
    let samples = verification_samples(&cfg, &scenario)?;
    let fit = fit_transient_constants(&scenario.model, &scenario.fsclf, &samples, &scenario.solver)?;
    HorizonReport::new(fit.bound_inputs()?)
}

/// Reads and validates a scenario file.
pub fn load(path: &Path) -> Result<ScenarioConfig, CliError> {
    ScenarioConfig::load(path)
}
