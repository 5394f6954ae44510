//! Scenario files: JSON with a `schema_version` field.

use std::path::Path;

use fsmpc_core::model::{ComparisonFunction, ControlSystem, Disturbance, FsClf, MeasurementFunction};
use fsmpc_core::mpc::{Algorithm, ClosedLoopConfig, InfeasibilityPolicy, SchemeRegistry, WarmStartPolicy};
use fsmpc_core::benchmark;
use fsmpc_core::solver::SolverConfig;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub system: SystemConfig,
    pub fsclf: FsClfConfig,
    /// Scheme for `run`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub algorithm: Option<VariantConfig>,
    /// Schemes for `compare`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub variants: Vec<VariantConfig>,
    pub initial_state: Vec<f64>,
    #[serde(default = "default_total_steps")]
    pub total_steps: usize,
    /// First time step of the post-transient window.
    #[serde(default = "default_transient_end")]
    pub transient_end: usize,
    #[serde(default)]
    pub solver: SolverOverrides,
    #[serde(default)]
    pub warm_start: WarmStartPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub verify: VerifyConfig,
}

fn default_total_steps() -> usize {
    benchmark::TOTAL_STEPS
}

fn default_transient_end() -> usize {
    benchmark::TRANSIENT_END
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum SystemConfig {
    Builtin(BuiltinSystem),
    Linear(LinearSystemConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BuiltinSystem {
    PaperNominal,
    PaperPerturbed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearSystemConfig {
    /// Row-major.
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disturbance: Option<DisturbanceConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceConfig {
    pub amplitude: f64,
    pub frequency: f64,
    /// Zero-based state indices receiving the disturbance.
    pub components: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum FsClfConfig {
    Quadratic {
        p: Vec<Vec<f64>>,
        decay_c: f64,
        #[serde(rename = "M")]
        m: usize,
    },
    OmegaPassthrough {
        #[serde(default)]
        omega: OmegaKind,
        decay_c: f64,
        #[serde(rename = "M")]
        m: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OmegaKind {
    #[default]
    Euclidean,
    Infinity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantConfig {
    /// Registry name: `multi-step`, `shrinking-updated` or `classic`.
    pub name: String,
    /// Defaults to `M` of the candidate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default)]
    pub on_infeasible: InfeasibilityPolicy,
    /// Column prefix in comparisons; defaults to the name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feasibility_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimality_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_outer_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_inner_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_penalty: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalty_growth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fd_step: Option<f64>,
}

impl SolverOverrides {
    pub fn apply(&self) -> SolverConfig {
        let d = SolverConfig::default();
        SolverConfig {
            feasibility_tol: self.feasibility_tol.unwrap_or(d.feasibility_tol),
            optimality_tol: self.optimality_tol.unwrap_or(d.optimality_tol),
            max_outer_iters: self.max_outer_iters.unwrap_or(d.max_outer_iters),
            max_inner_iters: self.max_inner_iters.unwrap_or(d.max_inner_iters),
            initial_penalty: self.initial_penalty.unwrap_or(d.initial_penalty),
            penalty_growth: self.penalty_growth.unwrap_or(d.penalty_growth),
            fd_step: self.fd_step.unwrap_or(d.fd_step),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Level set `V = level` the samples are placed on.
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default = "default_margin")]
    pub margin: f64,
}

fn default_samples() -> usize {
    64
}

fn default_level() -> f64 {
    1.0
}

fn default_margin() -> f64 {
    fsmpc_core::analysis::DEFAULT_MARGIN
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            samples: default_samples(),
            level: default_level(),
            margin: default_margin(),
        }
    }
}

fn invalid(field: &str, message: impl Into<String>) -> CliError {
    CliError::Validation {
        field: field.to_string(),
        message: message.into(),
    }
}

fn matrix(field: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>, CliError> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 {
        return Err(invalid(field, "matrix must be nonempty"));
    }
    if let Some(i) = rows.iter().position(|row| row.len() != c) {
        return Err(invalid(field, format!("row {i} has {} entries, expected {c}", rows[i].len())));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(invalid(field, "entries must be finite"));
    }
    Ok(DMatrix::from_row_iterator(r, c, rows.iter().flatten().copied()))
}

/// Everything a run needs, built from a validated config.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub plant: ControlSystem,
    pub model: ControlSystem,
    pub fsclf: FsClf,
    pub initial: DVector<f64>,
    pub solver: SolverConfig,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn state_dim(&self) -> usize {
        match &self.system {
            SystemConfig::Builtin(_) => 3,
            SystemConfig::Linear(l) => l.a.len(),
        }
    }

    pub fn steps(&self) -> usize {
        match self.fsclf {
            FsClfConfig::Quadratic { m, .. } | FsClfConfig::OmegaPassthrough { m, .. } => m,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        let scenario = self.build()?;
        let n = scenario.plant.state_dim();
        if self.total_steps == 0 {
            return Err(invalid("total_steps", "must be at least 1"));
        }
        if self.transient_end >= self.total_steps {
            return Err(invalid("transient_end", "must precede total_steps"));
        }
        if self.verify.samples == 0 {
            return Err(invalid("verify.samples", "must be at least 1"));
        }
        if !(self.verify.level.is_finite() && self.verify.level > 0.0) {
            return Err(invalid("verify.level", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.verify.margin) {
            return Err(invalid("verify.margin", "must lie in [0, 1)"));
        }
        let registry = SchemeRegistry::with_builtin();
        let all = self.algorithm.iter().map(|v| ("algorithm", v)).chain(self.variants.iter().map(|v| ("variants", v)));
        for (field, v) in all {
            if !registry.contains(&v.name) {
                return Err(invalid(&format!("{field}.name"), format!("unknown scheme `{}`", v.name)));
            }
            if v.horizon == Some(0) {
                return Err(invalid(&format!("{field}.horizon"), "must be at least 1"));
            }
            self.closed_loop(v)
                .validate()
                .map_err(|e| invalid(field, e.to_string()))?;
        }
        let mut labels: Vec<String> = self.variants.iter().map(VariantConfig::label).collect();
        labels.sort();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return Err(invalid("variants.label", format!("duplicate label `{}`", w[0])));
        }
        debug_assert_eq!(n, self.initial_state.len());
        Ok(())
    }

    /// Builds plant, prediction model and candidate, reporting the first
    /// offending field.
    pub fn build(&self) -> Result<Scenario, CliError> {
        let plant = match &self.system {
            SystemConfig::Builtin(BuiltinSystem::PaperNominal) => benchmark::nominal_system(),
            SystemConfig::Builtin(BuiltinSystem::PaperPerturbed) => benchmark::perturbed_system(),
            SystemConfig::Linear(l) => {
                let a = matrix("system.linear.a", &l.a)?;
                let b = matrix("system.linear.b", &l.b)?;
                if !a.is_square() {
                    return Err(invalid("system.linear.a", "must be square"));
                }
                if b.nrows() != a.nrows() {
                    return Err(invalid("system.linear.b", format!("must have {} rows", a.nrows())));
                }
                let sys = ControlSystem::linear(a, b).map_err(|e| invalid("system.linear", e.to_string()))?;
                match &l.disturbance {
                    None => sys,
                    Some(d) => {
                        if !(d.amplitude.is_finite() && d.frequency.is_finite()) {
                            return Err(invalid("system.linear.disturbance", "amplitude and frequency must be finite"));
                        }
                        if let Some(&c) = d.components.iter().find(|&&c| c >= sys.state_dim()) {
                            return Err(invalid("system.linear.disturbance.components", format!("index {c} out of range")));
                        }
                        sys.with_disturbance(Disturbance {
                            amplitude: d.amplitude,
                            frequency: d.frequency,
                            components: d.components.clone(),
                        })
                        .map_err(|e| invalid("system.linear.disturbance", e.to_string()))?
                    }
                }
            }
        };
        let n = plant.state_dim();
        let fsclf = match &self.fsclf {
            FsClfConfig::Quadratic { p, decay_c, m } => {
                let decay = decay(*decay_c, "fsclf.quadratic.decay_c")?;
                check_steps(*m, "fsclf.quadratic.M")?;
                let p = matrix("fsclf.quadratic.p", p)?;
                if p.shape() != (n, n) {
                    return Err(invalid("fsclf.quadratic.p", format!("must be {n}x{n}")));
                }
                FsClf::quadratic(p, decay, *m).map_err(|e| invalid("fsclf.quadratic.p", e.to_string()))?
            }
            FsClfConfig::OmegaPassthrough { omega, decay_c, m } => {
                let decay = decay(*decay_c, "fsclf.omega-passthrough.decay_c")?;
                check_steps(*m, "fsclf.omega-passthrough.M")?;
                let omega = match omega {
                    OmegaKind::Euclidean => MeasurementFunction::EuclideanNorm,
                    OmegaKind::Infinity => MeasurementFunction::InfinityNorm,
                };
                FsClf::measurement(omega, decay, *m).map_err(|e| invalid("fsclf", e.to_string()))?
            }
        };
        if self.initial_state.len() != n {
            return Err(invalid("initial_state", format!("has {} entries, expected {n}", self.initial_state.len())));
        }
        if self.initial_state.iter().any(|v| !v.is_finite()) {
            return Err(invalid("initial_state", "entries must be finite"));
        }
        let solver = self.solver.apply();
        solver.validate().map_err(|e| invalid("solver", e.to_string()))?;
        Ok(Scenario {
            model: plant.nominal(),
            plant,
            fsclf,
            initial: DVector::from_column_slice(&self.initial_state),
            solver,
        })
    }

    pub fn closed_loop(&self, variant: &VariantConfig) -> ClosedLoopConfig {
        ClosedLoopConfig {
            scheme: variant.name.clone(),
            horizon: variant.horizon.unwrap_or_else(|| self.steps()),
            total_steps: self.total_steps,
            solver: self.solver.apply(),
            warm_start: self.warm_start,
            on_infeasible: variant.on_infeasible,
        }
    }
}

impl VariantConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            name: algorithm.name().to_string(),
            horizon: None,
            on_infeasible: InfeasibilityPolicy::default(),
            label: None,
        }
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.name.clone())
    }
}

fn decay(c: f64, field: &str) -> Result<ComparisonFunction, CliError> {
    if !(c.is_finite() && (0.0..1.0).contains(&c)) {
        return Err(invalid(field, format!("must lie in [0, 1), got {c}")));
    }
    ComparisonFunction::linear(c).map_err(|e| invalid(field, e.to_string()))
}

fn check_steps(m: usize, field: &str) -> Result<(), CliError> {
    if m == 0 {
        return Err(invalid(field, "must be at least 1"));
    }
    Ok(())
}

/// The builtin benchmark as a config: third-order chain, `P`, `alpha(r) = 0.9 r`.
pub fn benchmark_scenario(perturbed: bool, steps: usize) -> ScenarioConfig {
    let p = benchmark::p_matrix();
    ScenarioConfig {
        schema_version: SCHEMA_VERSION,
        system: SystemConfig::Builtin(if perturbed { BuiltinSystem::PaperPerturbed } else { BuiltinSystem::PaperNominal }),
        fsclf: FsClfConfig::Quadratic {
            p: (0..3).map(|i| p.row(i).iter().copied().collect()).collect(),
            decay_c: benchmark::DECAY,
            m: steps,
        },
        algorithm: None,
        variants: Vec::new(),
        initial_state: benchmark::initial_state().iter().copied().collect(),
        total_steps: benchmark::TOTAL_STEPS,
        transient_end: benchmark::TRANSIENT_END,
        solver: SolverOverrides::default(),
        warm_start: WarmStartPolicy::default(),
        output_dir: None,
        seed: None,
        verify: VerifyConfig::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field_of(err: CliError) -> String {
        match err {
            CliError::Validation { field, .. } => field,
            other => panic!("expected a validation error, got {other}"),
        }
    }

    #[test]
    fn round_trip() {
        let mut cfg = benchmark_scenario(true, 6);
        cfg.algorithm = Some(VariantConfig::new(Algorithm::ShrinkingUpdated));
        cfg.variants = vec![VariantConfig::new(Algorithm::MultiStep), VariantConfig::new(Algorithm::Classic)];
        cfg.solver.feasibility_tol = Some(1e-7);
        cfg.seed = Some(4);
        let back = ScenarioConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn linear_system_round_trip() {
        let text = r#"{
            "schema_version": 1,
            "system": {"linear": {"a": [[1.2]], "b": [[1.0]],
                       "disturbance": {"amplitude": 0.1, "frequency": 0.5, "components": [0]}}},
            "fsclf": {"omega-passthrough": {"decay_c": 0.5, "M": 1}},
            "algorithm": {"name": "classic", "horizon": 3},
            "initial_state": [2.0],
            "total_steps": 20,
            "transient_end": 5
        }"#;
        let cfg = ScenarioConfig::from_json(text).unwrap();
        assert_eq!(ScenarioConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        let s = cfg.build().unwrap();
        assert!(s.plant.disturbance().is_some());
        assert!(s.model.disturbance().is_none());
    }

    #[test]
    fn validation_names_the_field() {
        let mut cfg = benchmark_scenario(false, 6);
        if let FsClfConfig::Quadratic { p, .. } = &mut cfg.fsclf {
            p[0][2] = 0.5;
        }
        assert_eq!(field_of(cfg.validate().unwrap_err()), "fsclf.quadratic.p");

        let mut cfg = benchmark_scenario(false, 0);
        assert_eq!(field_of(cfg.validate().unwrap_err()), "fsclf.quadratic.M");
        cfg = benchmark_scenario(false, 6);
        cfg.initial_state.pop();
        assert_eq!(field_of(cfg.validate().unwrap_err()), "initial_state");

        let mut cfg = benchmark_scenario(false, 6);
        cfg.algorithm = Some(VariantConfig {
            name: "tube".into(),
            ..VariantConfig::new(Algorithm::Classic)
        });
        assert_eq!(field_of(cfg.validate().unwrap_err()), "algorithm.name");

        let mut cfg = benchmark_scenario(false, 6);
        cfg.variants = vec![VariantConfig::new(Algorithm::Classic), VariantConfig::new(Algorithm::Classic)];
        assert_eq!(field_of(cfg.validate().unwrap_err()), "variants.label");

        let mut cfg = benchmark_scenario(false, 6);
        if let FsClfConfig::Quadratic { decay_c, .. } = &mut cfg.fsclf {
            *decay_c = 1.0;
        }
        assert_eq!(field_of(cfg.validate().unwrap_err()), "fsclf.quadratic.decay_c");

        let mut cfg = benchmark_scenario(false, 6);
        cfg.schema_version = 7;
        assert_eq!(field_of(cfg.validate().unwrap_err()), "schema_version");
    }

    #[test]
    fn parse_errors_carry_positions() {
        match ScenarioConfig::from_json("{\n  \"schema_version\": 1,\n  \"system\": 5\n}") {
            Err(CliError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(matches!(ScenarioConfig::from_json(r#"{"schema_version": 1, "bogus": 1}"#), Err(CliError::Parse { .. })));
    }

    proptest::proptest! {
        #[test]
        fn validated_configs_round_trip(
            perturbed: bool,
            m in 1usize..10,
            decay in 0.0f64..1.0,
            total in 2usize..300,
            x in proptest::collection::vec(-1e3f64..1e3, 3),
            tol in proptest::option::of(1e-12f64..1e-2),
            seed: Option<u64>,
            policy in 0usize..3,
        ) {
            let mut cfg = benchmark_scenario(perturbed, m);
            if let FsClfConfig::Quadratic { decay_c, .. } = &mut cfg.fsclf {
                *decay_c = decay;
            }
            cfg.total_steps = total;
            cfg.transient_end = total / 3;
            cfg.initial_state = x;
            cfg.solver.feasibility_tol = tol;
            cfg.seed = seed;
            let mut v = VariantConfig::new(Algorithm::ShrinkingUpdated);
            v.on_infeasible = [InfeasibilityPolicy::Error, InfeasibilityPolicy::RestartCycle, InfeasibilityPolicy::BestEffort][policy];
            cfg.algorithm = Some(v);
            cfg.validate().unwrap();
            let back = ScenarioConfig::from_json(&cfg.to_json()).unwrap();
            proptest::prop_assert_eq!(back, cfg);
        }
    }
}
