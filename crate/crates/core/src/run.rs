//! Command runners shared by the command-line tool and the HTTP service.
//!
//! Each runner takes a validated [`RunConfig`] and returns a serializable
//! result, so both front ends produce the same numbers for the same input.

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::assurance::{AssuranceCurve, AssuranceEngine, DesignSpec, PriorSet};
use crate::beta::{BetaParams, ContingencyTable};
use crate::comparators::{
    scenario_grid, total_from_group, wald_sample_size, width_study, Group, ScenarioGrid, WidthStudy,
};
use crate::config::{
    CompareMode, ConflictConfig, DesignConfig, PriorSpec, PriorsConfig, RunConfig, StudyConfig,
    DEFAULT_NT_MAX,
};
use crate::error::{Error, Result};
use crate::par::{Execution, Monitor};
use crate::robustness::{
    posterior_summary, predictive_pmf_series, prior_predictive_check, sensitivity_scan,
    ConflictReport, PosteriorSummary, PriorSlot, ScanSpec, SensitivityReport,
};

/// Version string reported by every front end.
pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SampleSizeResult {
    pub priors: PriorSet,
    pub design: DesignSpec,
    pub n_star: u64,
    pub assurance_at_n_star: f64,
    /// Assurance one below `n_star`.
    pub assurance_below: f64,
    /// False when the first crossing was found by the linear verification
    /// pass rather than the bisection.
    pub monotone_crossing: bool,
    /// Assurance curve up to `study.nt_max`, when that is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve: Option<AssuranceCurve>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct CurveResult {
    pub priors: PriorSet,
    pub design: DesignSpec,
    pub nt_max: u64,
    pub curve: AssuranceCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SensitivityResult {
    /// One report per varied prior, in the configured order.
    pub reports: Vec<SensitivityReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ConflictCheck {
    pub parameter: PriorSlot,
    pub report: ConflictReport,
    /// Prior predictive pmf over `0..=n`.
    pub pmf: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct PosteriorEntry {
    pub parameter: PriorSlot,
    pub prior: BetaParams,
    pub summary: PosteriorSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ConflictResult {
    pub observed: ContingencyTable,
    pub checks: Vec<ConflictCheck>,
    /// Posteriors after the observed table under the analysis priors.
    pub posteriors: Vec<PosteriorEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CompareResult {
    Grid(ScenarioGrid),
    Width(WidthStudy),
}

/// Wald formula size from the pilot point estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct WaldComparison {
    pub sens_hat: f64,
    pub prev_hat: f64,
    /// Probability that the study meets the width target.
    pub power: f64,
    pub n_diseased: u64,
    pub n_t: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct VapCaseStudy {
    pub config: RunConfig,
    pub sample_size: SampleSizeResult,
    /// Size of the study as run.
    pub n_original: u64,
    pub assurance_at_original: f64,
    pub sensitivity: SensitivityResult,
    pub conflict: ConflictResult,
    /// Prevalence posterior after the accuracy study under Beta(1, 1).
    pub flat_prevalence_posterior: PosteriorSummary,
    pub wald: Vec<WaldComparison>,
}

fn curve_max(study: &StudyConfig) -> Result<u64> {
    match study.nt_max.unwrap_or(DEFAULT_NT_MAX) {
        0 => Err(Error::config("study.nt_max", "must be at least 1")),
        n => Ok(n),
    }
}

fn engine(cfg: &RunConfig, exec: Execution) -> Result<(PriorSet, DesignSpec, AssuranceEngine)> {
    let (priors, _) = cfg.prior_set()?;
    let design = cfg.design_spec()?;
    let engine = AssuranceEngine::new(priors, design)?.with_execution(exec);
    Ok((priors, design, engine))
}

pub fn run_sample_size(cfg: &RunConfig, exec: Execution) -> Result<SampleSizeResult> {
    let (priors, design, engine) = engine(cfg, exec)?;
    let size = engine.min_sample_size(cfg.study.cap)?;
    let curve = match cfg.study.nt_max {
        Some(_) => Some(engine.curve(curve_max(&cfg.study)?)),
        None => None,
    };
    Ok(SampleSizeResult {
        priors,
        design,
        n_star: size.n_star,
        assurance_at_n_star: size.assurance,
        assurance_below: size.assurance_below,
        monotone_crossing: size.monotone_crossing,
        curve,
    })
}

pub fn run_curve(cfg: &RunConfig, exec: Execution) -> Result<CurveResult> {
    let nt_max = curve_max(&cfg.study)?;
    let (priors, design, engine) = engine(cfg, exec)?;
    Ok(CurveResult {
        priors,
        design,
        nt_max,
        curve: engine.curve(nt_max),
    })
}

pub fn run_sensitivity(cfg: &RunConfig, exec: Execution) -> Result<SensitivityResult> {
    let (priors, origins) = cfg.prior_set()?;
    let design = cfg.design_spec()?;
    let s = &cfg.study.sensitivity;
    if s.vary.is_empty() {
        return Err(Error::config(
            "study.sensitivity.vary",
            "name at least one prior to vary",
        ));
    }
    let reports = s
        .vary
        .iter()
        .map(|&vary| {
            let scan = ScanSpec {
                vary,
                epsilon: s.epsilon,
                n_angles: s.n_angles,
                nt_eval: s.nt_eval,
                cap: cfg.study.cap,
                origin: origins.get(vary),
            };
            sensitivity_scan(&priors, &design, &scan, exec)
        })
        .collect::<Result<_>>()?;
    Ok(SensitivityResult { reports })
}

pub fn run_conflict(cfg: &RunConfig) -> Result<ConflictResult> {
    let (priors, _) = cfg.prior_set()?;
    let levels = cfg.conflict_levels()?;
    let observed = cfg.study.conflict.observed.ok_or_else(|| {
        Error::config(
            "study.conflict.observed",
            "an observed 2x2 table is required",
        )
    })?;
    let alpha = cfg.design.as_ref().map_or(0.05, |d| d.alpha);

    let mut checks = Vec::new();
    let mut check = |parameter, y: u64, n: u64, prior: BetaParams| -> Result<()> {
        checks.push(ConflictCheck {
            parameter,
            report: prior_predictive_check(y, n, prior, levels)?,
            pmf: predictive_pmf_series(n, prior),
        });
        Ok(())
    };
    check(
        PriorSlot::Prev,
        observed.diseased(),
        observed.total(),
        priors.prev,
    )?;
    check(
        PriorSlot::Sens,
        observed.n11,
        observed.diseased(),
        priors.sens,
    )?;
    if let Some(spec) = priors.spec {
        check(PriorSlot::Spec, observed.n22, observed.non_diseased(), spec)?;
    }

    let mut posteriors = Vec::new();
    let mut post = |parameter, prior: BetaParams, s: u64, f: u64| -> Result<()> {
        posteriors.push(PosteriorEntry {
            parameter,
            prior,
            summary: posterior_summary(prior, s, f, alpha)?,
        });
        Ok(())
    };
    post(
        PriorSlot::Prev,
        priors.prev,
        observed.diseased(),
        observed.non_diseased(),
    )?;
    post(
        PriorSlot::Sens,
        priors.analysis_sens(),
        observed.n11,
        observed.n21,
    )?;
    if let Some(spec) = priors.analysis_spec() {
        post(PriorSlot::Spec, spec, observed.n22, observed.n12)?;
    }
    Ok(ConflictResult {
        observed,
        checks,
        posteriors,
    })
}

pub fn run_compare(
    cfg: &RunConfig,
    exec: Execution,
    monitor: Monitor<'_>,
) -> Result<CompareResult> {
    match cfg.study.compare.mode {
        CompareMode::Grid => {
            scenario_grid(&cfg.grid_spec(), exec, monitor).map(CompareResult::Grid)
        }
        CompareMode::Width => {
            width_study(&cfg.width_spec(), exec, monitor).map(CompareResult::Width)
        }
    }
}

/// Size of the accuracy study as run.
pub const VAP_ORIGINAL_N: u64 = 150;

/// Analytical validity study: 16 of 17 diseased test positive; 17 of 72
/// have the disease.
pub const VAP_AV_TABLE: ContingencyTable = ContingencyTable {
    n11: 16,
    n12: 35,
    n21: 1,
    n22: 20,
};

/// Diagnostic accuracy study.
pub const VAP_ACCURACY_TABLE: ContingencyTable = ContingencyTable {
    n11: 51,
    n12: 55,
    n21: 2,
    n22: 42,
};

/// The ventilator-associated pneumonia design: initial priors updated with
/// the analytical validity study, a 0.16 width target and 80% assurance.
pub fn vap_config() -> RunConfig {
    let av = VAP_AV_TABLE;
    RunConfig {
        priors: Some(PriorsConfig {
            sens: PriorSpec::Update {
                base: Box::new(PriorSpec::MeanEss {
                    mean: 0.9,
                    ess: 11.0,
                }),
                successes: av.n11,
                failures: av.n21,
                discount: 1.0,
            },
            spec: None,
            prev: PriorSpec::Update {
                base: Box::new(PriorSpec::shape(12.0, 43.0)),
                successes: av.diseased(),
                failures: av.non_diseased(),
                discount: 1.0,
            },
            analysis_sens: None,
            analysis_spec: None,
        }),
        design: Some(DesignConfig {
            measure: crate::assurance::Measure::Sensitivity,
            width: 0.16,
            width_spec: None,
            alpha: 0.05,
            sided: crate::interval::Sidedness::TwoSided,
            assurance: 0.8,
        }),
        study: StudyConfig {
            nt_max: Some(VAP_ORIGINAL_N),
            conflict: ConflictConfig {
                observed: Some(VAP_ACCURACY_TABLE),
                ..Default::default()
            },
            ..Default::default()
        },
        output: Default::default(),
    }
}

/// Pilot estimates behind the original design.
const VAP_PILOT_SENS: f64 = 0.94;
const VAP_PILOT_PREV: f64 = 0.24;

/// Runs the full case study on `cfg` (normally [`vap_config`]).
pub fn run_vap_case_study(cfg: &RunConfig, exec: Execution) -> Result<VapCaseStudy> {
    let sample_size = run_sample_size(cfg, exec)?;
    let (_, design, engine) = engine(cfg, exec)?;
    let assurance_at_original = match &sample_size.curve {
        Some(c) if c.points.len() as u64 >= VAP_ORIGINAL_N => {
            c.points[VAP_ORIGINAL_N as usize - 1].assurance
        }
        _ => engine.assurance(VAP_ORIGINAL_N),
    };
    let sensitivity = run_sensitivity(cfg, exec)?;
    let conflict = run_conflict(cfg)?;
    let observed = conflict.observed;
    let flat_prevalence_posterior = posterior_summary(
        BetaParams::uniform(),
        observed.diseased(),
        observed.non_diseased(),
        design.interval.alpha,
    )?;
    let wald = [0.5, design.assurance_target]
        .into_iter()
        .map(|power| -> Result<WaldComparison> {
            let n_diseased = wald_sample_size(
                VAP_PILOT_SENS,
                design.interval.alpha,
                power,
                design.w_star_sens,
            )?;
            Ok(WaldComparison {
                sens_hat: VAP_PILOT_SENS,
                prev_hat: VAP_PILOT_PREV,
                power,
                n_diseased,
                n_t: total_from_group(n_diseased, VAP_PILOT_PREV, Group::Disease)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(VapCaseStudy {
        config: cfg.clone(),
        sample_size,
        n_original: VAP_ORIGINAL_N,
        assurance_at_original,
        sensitivity,
        conflict,
        flat_prevalence_posterior,
        wald,
    })
}

/// Body of an assurance-curve request: a configuration with the curve
/// length given at the top level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct CurveRequest {
    pub priors: PriorsConfig,
    pub design: DesignConfig,
    #[serde(default)]
    pub study: StudyConfig,
    #[serde(rename = "nT_max", default, skip_serializing_if = "Option::is_none")]
    pub nt_max: Option<u64>,
}

impl From<CurveRequest> for RunConfig {
    fn from(r: CurveRequest) -> Self {
        let mut study = r.study;
        if r.nt_max.is_some() {
            study.nt_max = r.nt_max;
        }
        RunConfig {
            priors: Some(r.priors),
            design: Some(r.design),
            study,
            output: Default::default(),
        }
    }
}

/// Response wrapper used by the HTTP service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Envelope<T> {
    pub inputs_echo: serde_json::Value,
    pub result: T,
    pub engine_version: String,
    pub compute_ms: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vap_priors_resolve() {
        let (p, origins) = vap_config().prior_set().unwrap();
        assert!((p.sens.a - 25.9).abs() < 1e-12 && (p.sens.b - 2.1).abs() < 1e-12);
        assert_eq!((p.prev.a, p.prev.b), (29.0, 98.0));
        let base = origins.sens.unwrap().base;
        assert!((base.a - 9.9).abs() < 1e-12 && (base.b - 1.1).abs() < 1e-12);
    }

    #[test]
    fn conflict_needs_a_table() {
        let mut cfg = vap_config();
        cfg.study.conflict.observed = None;
        assert!(
            matches!(run_conflict(&cfg), Err(Error::Config { ref field, .. }) if field == "study.conflict.observed")
        );
    }

    #[test]
    fn conflict_checks_and_posteriors() {
        let r = run_conflict(&vap_config()).unwrap();
        assert_eq!(r.checks.len(), 2);
        let prev = &r.checks[0].report;
        assert_eq!((prev.observed, prev.n), (53, 150));
        assert_eq!(r.checks[0].pmf.len(), 151);
        let sens = &r.posteriors[1].summary;
        assert!((sens.params.a - 76.9).abs() < 1e-12 && (sens.params.b - 4.1).abs() < 1e-12);
    }

    #[test]
    fn curve_bounds() {
        let mut cfg = vap_config();
        cfg.study.nt_max = Some(0);
        assert!(matches!(
            run_curve(&cfg, Execution::Sequential),
            Err(Error::Config { .. })
        ));
        cfg.study.nt_max = Some(20);
        assert_eq!(
            run_curve(&cfg, Execution::Sequential)
                .unwrap()
                .curve
                .points
                .len(),
            20
        );
    }
}
