use nalgebra::DVector;
use serde::Serialize;

use super::{AnalysisError, HorizonBoundInputs};
use crate::model::{ControlSystem, FsClf};
use crate::ocp::{best_terminal_value, solve_ocp, OcpError, OcpSolution, OcpSpec, OcpVariant};
use crate::solver::SolverConfig;

/// Ratios below `1 - DEFAULT_MARGIN` count as contraction.
pub const DEFAULT_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct CertificationConfig {
    pub solver: SolverConfig,
    pub margin: f64,
}

impl Default for CertificationConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            margin: DEFAULT_MARGIN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Certified,
    NotCertified,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleCertificate {
    pub state: Vec<f64>,
    /// Contractive problem solved within the feasibility tolerance.
    pub feasible: bool,
    /// `V(x(M)) / V(xi)` along the returned solution; 0 when `V(xi) = 0`.
    pub ratio: f64,
    /// Smallest `V(x(M)) / V(xi)` reachable at all, independent of `alpha`.
    pub best_ratio: Option<f64>,
    pub residual: f64,
    pub status: String,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificationReport {
    pub steps: usize,
    pub samples: usize,
    pub feasible_count: usize,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// Worst case of the per-sample best reachable ratio.
    pub max_best_ratio: f64,
    pub worst_residual: f64,
    pub margin: f64,
    pub verdict: Verdict,
    pub failing_samples: Vec<usize>,
    pub records: Vec<SampleCertificate>,
}

/// Solves the contractive problem at every sample and grades `fsclf`.
///
/// Solver failures are recorded per sample. The verdict is `Certified` iff
/// every sample is feasible with ratio below `1 - margin`.
pub fn certify_fsclf(
    system: &ControlSystem,
    fsclf: &FsClf,
    samples: &[DVector<f64>],
    config: &CertificationConfig,
) -> Result<CertificationReport, AnalysisError> {
    if samples.is_empty() {
        return Err(AnalysisError::EmptySamples);
    }
    let records: Vec<SampleCertificate> = samples.iter().map(|xi| certify_sample(system, fsclf, xi, config)).collect();
    let failing: Vec<usize> = records
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.feasible || r.ratio >= 1.0 - config.margin)
        .map(|(i, _)| i)
        .collect();
    let fold = |init: f64, f: fn(f64, f64) -> f64, it: &mut dyn Iterator<Item = f64>| it.fold(init, f);
    let report = CertificationReport {
        steps: fsclf.steps,
        samples: records.len(),
        feasible_count: records.iter().filter(|r| r.feasible).count(),
        min_ratio: fold(f64::INFINITY, f64::min, &mut records.iter().map(|r| r.ratio)),
        max_ratio: fold(0.0, f64::max, &mut records.iter().map(|r| r.ratio)),
        max_best_ratio: fold(0.0, f64::max, &mut records.iter().filter_map(|r| r.best_ratio)),
        worst_residual: fold(0.0, f64::max, &mut records.iter().map(|r| r.residual)),
        margin: config.margin,
        verdict: if failing.is_empty() { Verdict::Certified } else { Verdict::NotCertified },
        failing_samples: failing,
        records,
    };
    log::info!(
        "certification M={}: {}/{} feasible, ratios [{:.4}, {:.4}]",
        report.steps,
        report.feasible_count,
        report.samples,
        report.min_ratio,
        report.max_ratio
    );
    Ok(report)
}

fn certify_sample(system: &ControlSystem, fsclf: &FsClf, xi: &DVector<f64>, config: &CertificationConfig) -> SampleCertificate {
    let v0 = fsclf.value(xi);
    let mut cert = SampleCertificate {
        state: xi.iter().copied().collect(),
        feasible: false,
        ratio: f64::INFINITY,
        best_ratio: None,
        residual: f64::INFINITY,
        status: String::new(),
        error: None,
    };
    let ratio_of = |sol: &OcpSolution| if v0 > 0.0 { fsclf.value(sol.predicted.final_state()) / v0 } else { 0.0 };
    let spec = OcpSpec::new(OcpVariant::Contractive { steps: fsclf.steps }, system, fsclf, xi.clone());
    match solve_ocp(&spec, &config.solver, None) {
        Ok(sol) => {
            cert.feasible = true;
            cert.ratio = ratio_of(&sol);
            cert.residual = sol.solver.max_residual();
            cert.status = sol.status.as_str().to_string();
        }
        Err(OcpError::Infeasible { best, max_residual, .. }) => {
            cert.ratio = ratio_of(&best);
            cert.residual = max_residual;
            cert.status = best.status.as_str().to_string();
        }
        Err(e) => {
            cert.status = "error".into();
            cert.error = Some(e.to_string());
        }
    }
    if v0 > 0.0 {
        if let Ok((best, _)) = best_terminal_value(system, fsclf, xi, fsclf.steps, &config.solver) {
            cert.best_ratio = Some(best / v0);
        }
    } else {
        cert.best_ratio = Some(0.0);
    }
    cert
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransientConstants {
    pub c: f64,
    pub d: f64,
    pub steps: usize,
    pub gamma: f64,
}

impl TransientConstants {
    pub fn bound_inputs(&self) -> Result<HorizonBoundInputs, AnalysisError> {
        HorizonBoundInputs::new(self.c, self.d, self.steps)
    }
}

/// Worst-case constants over the samples: `c` is the largest `M`-step ratio
/// and `d` the largest intermediate ratio `V(x(i)) / V(xi)`, `0 < i < M`,
/// along the contractive optimal trajectories. With `M = 1` there are no
/// intermediate steps and `d = 1`, the bound at `i = 0`. A measured `d` of 0
/// (the state is zeroed within one step) is raised to the smallest positive
/// double so that `gamma` stays defined.
pub fn fit_transient_constants(
    system: &ControlSystem,
    fsclf: &FsClf,
    samples: &[DVector<f64>],
    solver: &SolverConfig,
) -> Result<TransientConstants, AnalysisError> {
    if samples.is_empty() {
        return Err(AnalysisError::EmptySamples);
    }
    let steps = fsclf.steps;
    let mut c: f64 = 0.0;
    let mut d: f64 = if steps == 1 { 1.0 } else { 0.0 };
    for (index, xi) in samples.iter().enumerate() {
        let v0 = fsclf.value(xi);
        if v0 <= 0.0 {
            return Err(AnalysisError::InvalidInput(format!("sample {index} lies on the zero set of V")));
        }
        let spec = OcpSpec::new(OcpVariant::Contractive { steps }, system, fsclf, xi.clone());
        let sol = match solve_ocp(&spec, solver, None) {
            Ok(sol) => sol,
            Err(OcpError::Infeasible { max_residual, .. }) => {
                return Err(AnalysisError::SampleInfeasible { index, residual: max_residual })
            }
            Err(e) => return Err(e.into()),
        };
        let ratios: Vec<f64> = sol.predicted.states.iter().map(|x| fsclf.value(x) / v0).collect();
        c = c.max(ratios[steps]);
        d = ratios[1..steps].iter().copied().fold(d, f64::max);
    }
    let d = d.max(f64::MIN_POSITIVE);
    let inputs = HorizonBoundInputs::new(c, d, steps)?;
    Ok(TransientConstants { c, d, steps, gamma: inputs.gamma() })
}
