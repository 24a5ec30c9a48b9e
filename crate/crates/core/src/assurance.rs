//! Exact assurance for sensitivity, specificity or both, and the minimum
//! sample size that reaches a target assurance.
//!
//! The assurance at a total sample size `n` averages, over the prior
//! predictive (beta-binomial) distribution of the number of diseased
//! individuals `m`, the probability that the posterior interval for the
//! accuracy measure meets its width target given `m`. That conditional
//! probability depends on `m` alone, so it is tabulated once per group size
//! and reused by every total sample size.

use std::sync::{Arc, RwLock};

use rand::Rng;
use rand_distr::{Beta as BetaDist, Binomial, Distribution};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::beta::{beta_binomial_pmf_vec, BetaParams};
use crate::error::{Error, Result};
use crate::interval::{
    critical_set, critical_set_seeded, interval_width, CriticalSet, IntervalSpec,
};
use crate::par::Execution;
use crate::rng;

/// Default upper bound for sample-size searches.
pub const DEFAULT_CAP: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    #[serde(alias = "sens")]
    Sensitivity,
    #[serde(alias = "spec")]
    Specificity,
    Both,
}

/// Interval-width target for a diagnostic accuracy study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct DesignSpec {
    pub measure: Measure,
    /// Width target for the sensitivity interval.
    pub w_star_sens: f64,
    /// Width target for the specificity interval.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_star_spec: Option<f64>,
    pub interval: IntervalSpec,
    /// Required assurance.
    pub assurance_target: f64,
}

impl DesignSpec {
    pub fn new(
        measure: Measure,
        w_star_sens: f64,
        w_star_spec: Option<f64>,
        interval: IntervalSpec,
        assurance_target: f64,
    ) -> Result<Self> {
        let spec = DesignSpec {
            measure,
            w_star_sens,
            w_star_spec,
            interval,
            assurance_target,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Sensitivity-only design.
    pub fn sensitivity(w_star: f64, interval: IntervalSpec, assurance_target: f64) -> Result<Self> {
        DesignSpec::new(
            Measure::Sensitivity,
            w_star,
            None,
            interval,
            assurance_target,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !unit(self.w_star_sens) {
            return Err(Error::config(
                "design.width",
                format!("width target must lie in (0, 1), got {}", self.w_star_sens),
            ));
        }
        match (self.measure, self.w_star_spec) {
            (Measure::Specificity | Measure::Both, None) => {
                return Err(Error::config(
                    "design.width_spec",
                    "a specificity width target is required for this measure",
                ))
            }
            (_, Some(w)) if !unit(w) => {
                return Err(Error::config(
                    "design.width_spec",
                    format!("width target must lie in (0, 1), got {w}"),
                ))
            }
            _ => {}
        }
        if !unit(self.assurance_target) {
            return Err(Error::config(
                "design.assurance",
                format!(
                    "assurance target must lie in (0, 1), got {}",
                    self.assurance_target
                ),
            ));
        }
        Ok(())
    }

    fn spec_width(&self) -> f64 {
        self.w_star_spec.unwrap_or(self.w_star_sens)
    }
}

/// Design priors for sensitivity, specificity and prevalence, with optional
/// analysis priors that replace the design priors in the posterior
/// computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct PriorSet {
    pub sens: BetaParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<BetaParams>,
    pub prev: BetaParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis_sens: Option<BetaParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis_spec: Option<BetaParams>,
}

impl PriorSet {
    pub fn new(sens: BetaParams, prev: BetaParams) -> Self {
        PriorSet {
            sens,
            spec: None,
            prev,
            analysis_sens: None,
            analysis_spec: None,
        }
    }

    pub fn with_spec(mut self, spec: BetaParams) -> Self {
        self.spec = Some(spec);
        self
    }

    pub fn with_analysis_sens(mut self, p: BetaParams) -> Self {
        self.analysis_sens = Some(p);
        self
    }

    pub fn with_analysis_spec(mut self, p: BetaParams) -> Self {
        self.analysis_spec = Some(p);
        self
    }

    pub fn analysis_sens(&self) -> BetaParams {
        self.analysis_sens.unwrap_or(self.sens)
    }

    pub fn analysis_spec(&self) -> Option<BetaParams> {
        self.analysis_spec.or(self.spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct CurvePoint {
    pub n_t: u64,
    pub assurance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct AssuranceCurve {
    pub points: Vec<CurvePoint>,
    /// First sample size whose assurance reaches the target.
    pub n_star: Option<u64>,
}

/// Outcome of a minimum sample size search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SampleSize {
    pub n_star: u64,
    pub assurance: f64,
    /// Assurance one below `n_star` (0 when `n_star` is 1 and nothing smaller
    /// was evaluated).
    pub assurance_below: f64,
    /// False when the bisection landed on a later crossing than the first
    /// one and the linear verification pass corrected it.
    pub monotone_crossing: bool,
}

/// `Pr(width target met | group size m)`: the beta-binomial mass, under the
/// design prior, of the success counts whose posterior interval under the
/// analysis prior is no wider than `w_star`.
pub fn assurance_conditional(
    group_size: u64,
    design_prior: BetaParams,
    analysis_prior: BetaParams,
    w_star: f64,
    interval: IntervalSpec,
) -> f64 {
    let set = critical_set(analysis_prior, group_size, w_star, interval);
    conditional_from_set(group_size, design_prior, set)
}

fn conditional_from_set(group_size: u64, design_prior: BetaParams, set: CriticalSet) -> f64 {
    if set.is_empty() {
        return 0.0;
    }
    if set.is_complete() {
        return 1.0;
    }
    let pmf = beta_binomial_pmf_vec(group_size, design_prior);
    let n = group_size as i64;
    let lower: f64 = if set.c1 >= 0 {
        pmf[..=(set.c1.min(n) as usize)].iter().sum()
    } else {
        0.0
    };
    let upper: f64 = if set.c2 <= n {
        pmf[set.c2 as usize..].iter().sum()
    } else {
        0.0
    };
    (lower + upper).clamp(0.0, 1.0)
}

/// Group sizes per parallel work unit when extending a table.
const TABLE_CHUNK: usize = 64;

/// Lazily extended table of conditional assurances indexed by group size.
#[derive(Debug)]
struct GroupTable {
    design: BetaParams,
    analysis: BetaParams,
    w_star: f64,
    interval: IntervalSpec,
    values: RwLock<Vec<f64>>,
}

impl GroupTable {
    fn new(design: BetaParams, analysis: BetaParams, w_star: f64, interval: IntervalSpec) -> Self {
        GroupTable {
            design,
            analysis,
            w_star,
            interval,
            values: RwLock::new(Vec::new()),
        }
    }

    fn ensure(&self, max_group: u64, exec: Execution) {
        let have = self.values.read().expect("table lock").len();
        let want = max_group as usize + 1;
        if have >= want {
            return;
        }
        // chunks run in parallel; within a chunk each search starts from the
        // previous group size's boundaries
        let starts: Vec<usize> = (have..want).step_by(TABLE_CHUNK).collect();
        let fresh: Vec<f64> = exec
            .map_slice(&starts, |&from| {
                let to = (from + TABLE_CHUNK).min(want);
                let mut hint = None;
                (from..to)
                    .map(|m| {
                        let (set, h) = critical_set_seeded(
                            self.analysis,
                            m as u64,
                            self.w_star,
                            self.interval,
                            hint,
                        );
                        hint = Some(h);
                        conditional_from_set(m as u64, self.design, set)
                    })
                    .collect::<Vec<f64>>()
            })
            .into_iter()
            .flatten()
            .collect();
        let mut values = self.values.write().expect("table lock");
        // another thread may have extended the table meanwhile; entries are
        // deterministic so only the missing tail is appended
        if values.len() == have {
            values.extend(fresh);
        } else if values.len() < want {
            let skip = values.len() - have;
            values.extend(fresh.into_iter().skip(skip));
        }
    }

    fn snapshot(&self, max_group: u64, exec: Execution) -> Vec<f64> {
        self.ensure(max_group, exec);
        self.values.read().expect("table lock")[..=max_group as usize].to_vec()
    }
}

/// Assurance evaluator for one prior set and design.
#[derive(Debug, Clone)]
pub struct AssuranceEngine {
    priors: PriorSet,
    design: DesignSpec,
    sens: Option<Arc<GroupTable>>,
    spec: Option<Arc<GroupTable>>,
    exec: Execution,
}

impl AssuranceEngine {
    pub fn new(priors: PriorSet, design: DesignSpec) -> Result<Self> {
        design.validate()?;
        let sens = match design.measure {
            Measure::Sensitivity | Measure::Both => Some(Arc::new(GroupTable::new(
                priors.sens,
                priors.analysis_sens(),
                design.w_star_sens,
                design.interval,
            ))),
            Measure::Specificity => None,
        };
        let spec = match design.measure {
            Measure::Specificity | Measure::Both => {
                let design_prior = priors.spec.ok_or_else(|| {
                    Error::config(
                        "priors.spec",
                        "a specificity prior is required for this measure",
                    )
                })?;
                let analysis = priors.analysis_spec().unwrap_or(design_prior);
                Some(Arc::new(GroupTable::new(
                    design_prior,
                    analysis,
                    design.spec_width(),
                    design.interval,
                )))
            }
            Measure::Sensitivity => None,
        };
        Ok(AssuranceEngine {
            priors,
            design,
            sens,
            spec,
            exec: Execution::default(),
        })
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    /// The same engine with a different prevalence prior. Conditional tables
    /// do not depend on prevalence and are shared.
    pub fn with_prevalence(&self, prev: BetaParams) -> Self {
        let mut e = self.clone();
        e.priors.prev = prev;
        e
    }

    pub fn priors(&self) -> &PriorSet {
        &self.priors
    }

    pub fn design(&self) -> &DesignSpec {
        &self.design
    }

    /// Conditional assurance table for the diseased group, `m = 0..=max_group`.
    pub fn sensitivity_table(&self, max_group: u64) -> Option<Vec<f64>> {
        self.sens.as_ref().map(|t| t.snapshot(max_group, self.exec))
    }

    /// Conditional assurance table for the non-diseased group.
    pub fn specificity_table(&self, max_group: u64) -> Option<Vec<f64>> {
        self.spec.as_ref().map(|t| t.snapshot(max_group, self.exec))
    }

    /// Assurance for the configured measure at total sample size `n_t`.
    pub fn assurance(&self, n_t: u64) -> f64 {
        let sens = self.sensitivity_table(n_t);
        let spec = self.specificity_table(n_t);
        self.assurance_with(n_t, sens.as_deref(), spec.as_deref())
    }

    fn assurance_with(&self, n_t: u64, sens: Option<&[f64]>, spec: Option<&[f64]>) -> f64 {
        let weights = beta_binomial_pmf_vec(n_t, self.priors.prev);
        let mass: f64 = weights.iter().sum();
        let n = n_t as usize;
        let total: f64 = match (sens, spec) {
            (Some(s), None) => weights.iter().zip(s).map(|(w, c)| w * c).sum(),
            (None, Some(t)) => weights.iter().enumerate().map(|(m, w)| w * t[n - m]).sum(),
            (Some(s), Some(t)) => weights
                .iter()
                .enumerate()
                .map(|(m, w)| w * s[m] * t[n - m])
                .sum(),
            (None, None) => unreachable!("engine always holds at least one table"),
        };
        // dividing by the summed weights makes an all-ones table give exactly 1
        (total / mass).clamp(0.0, 1.0)
    }

    /// Assurance at every `n_t` in `1..=n_t_max`.
    pub fn curve(&self, n_t_max: u64) -> AssuranceCurve {
        let values = self.assurance_range(1, n_t_max);
        let points: Vec<CurvePoint> = values
            .into_iter()
            .enumerate()
            .map(|(i, assurance)| CurvePoint {
                n_t: i as u64 + 1,
                assurance,
            })
            .collect();
        let n_star = points
            .iter()
            .find(|p| p.assurance >= self.design.assurance_target)
            .map(|p| p.n_t);
        AssuranceCurve { points, n_star }
    }

    /// Assurance for `n_t = from..=to`.
    pub fn assurance_range(&self, from: u64, to: u64) -> Vec<f64> {
        if to < from {
            return Vec::new();
        }
        let sens = self.sensitivity_table(to);
        let spec = self.specificity_table(to);
        self.exec.map_range(from as usize..to as usize + 1, |n| {
            self.assurance_with(n as u64, sens.as_deref(), spec.as_deref())
        })
    }

    /// Smallest `n_t <= cap` whose assurance reaches the design target.
    ///
    /// Doubling brackets the crossing, bisection narrows it, and a linear
    /// pass over `1..=n` confirms that no earlier sample size already
    /// reached the target.
    pub fn min_sample_size(&self, cap: u64) -> Result<SampleSize> {
        if cap == 0 {
            return Err(Error::config("study.cap", "cap must be at least 1"));
        }
        let target = self.design.assurance_target;
        let reaches = |n: u64| self.assurance(n) >= target;

        let mut lo = 0u64;
        let mut hi = 1u64;
        while !reaches(hi) {
            if hi >= cap {
                return Err(Error::NotFound { cap, target });
            }
            lo = hi;
            hi = (hi * 2).min(cap);
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if reaches(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }

        let values = self.assurance_range(1, hi);
        let first = values
            .iter()
            .position(|&a| a >= target)
            .expect("bisection endpoint reaches the target");
        let n_star = first as u64 + 1;
        Ok(SampleSize {
            n_star,
            assurance: values[first],
            assurance_below: if first > 0 { values[first - 1] } else { 0.0 },
            monotone_crossing: n_star == hi,
        })
    }
}

/// Assurance that the sensitivity interval meets its target at total
/// sample size `n_t`, summed over the size of the diseased group.
pub fn assurance_sensitivity(n_t: u64, priors: &PriorSet, design: &DesignSpec) -> Result<f64> {
    let mut d = *design;
    d.measure = Measure::Sensitivity;
    Ok(AssuranceEngine::new(*priors, d)?.assurance(n_t))
}

/// Specificity analogue: the non-diseased group has `n_t - m` members.
pub fn assurance_specificity(n_t: u64, priors: &PriorSet, design: &DesignSpec) -> Result<f64> {
    let mut d = *design;
    d.measure = Measure::Specificity;
    Ok(AssuranceEngine::new(*priors, d)?.assurance(n_t))
}

/// Joint assurance that both intervals meet their targets.
pub fn assurance_joint(n_t: u64, priors: &PriorSet, design: &DesignSpec) -> Result<f64> {
    let mut d = *design;
    d.measure = Measure::Both;
    Ok(AssuranceEngine::new(*priors, d)?.assurance(n_t))
}

pub fn assurance_curve(
    n_t_max: u64,
    priors: &PriorSet,
    design: &DesignSpec,
) -> Result<AssuranceCurve> {
    if n_t_max == 0 {
        return Err(Error::config(
            "study.nt_max",
            "curve length must be at least 1",
        ));
    }
    Ok(AssuranceEngine::new(*priors, *design)?.curve(n_t_max))
}

pub fn min_sample_size(priors: &PriorSet, design: &DesignSpec, cap: u64) -> Result<SampleSize> {
    AssuranceEngine::new(*priors, *design)?.min_sample_size(cap)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct MonteCarloEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub reps: u64,
}

const MC_BLOCK: u64 = 1_000;
const MC_TAG: u64 = 0x000A_550C;

/// Simulation estimate of the assurance, drawing prevalence and accuracy
/// from the design priors and judging each simulated study by its posterior
/// width under the analysis priors.
pub fn monte_carlo_assurance(
    n_t: u64,
    priors: &PriorSet,
    design: &DesignSpec,
    reps: u64,
    seed: u64,
    exec: Execution,
) -> Result<MonteCarloEstimate> {
    if reps == 0 {
        return Err(Error::config(
            "study.reps",
            "at least one replicate is required",
        ));
    }
    design.validate()?;
    let need_sens = matches!(design.measure, Measure::Sensitivity | Measure::Both);
    let need_spec = matches!(design.measure, Measure::Specificity | Measure::Both);
    let spec_prior = if need_spec {
        Some(priors.spec.ok_or_else(|| {
            Error::config(
                "priors.spec",
                "a specificity prior is required for this measure",
            )
        })?)
    } else {
        None
    };
    let analysis_sens = priors.analysis_sens();
    let analysis_spec = priors.analysis_spec();
    let beta = |p: BetaParams| BetaDist::new(p.a, p.b).expect("validated beta shape");
    let prev_dist = beta(priors.prev);
    let sens_dist = beta(priors.sens);
    let spec_dist = spec_prior.map(beta);

    let blocks = reps.div_ceil(MC_BLOCK);
    let hits = exec.map_range(0..blocks as usize, |blk| {
        let mut rng = rng::stream(seed, &[MC_TAG, n_t, blk as u64]);
        let count = MC_BLOCK.min(reps - blk as u64 * MC_BLOCK);
        let mut hits = 0u64;
        for _ in 0..count {
            let rho: f64 = prev_dist.sample(&mut rng);
            let diseased = binomial(&mut rng, n_t, rho);
            let mut ok = true;
            if need_sens {
                let lambda: f64 = sens_dist.sample(&mut rng);
                let y = binomial(&mut rng, diseased, lambda);
                let post = BetaParams {
                    a: analysis_sens.a + y as f64,
                    b: analysis_sens.b + (diseased - y) as f64,
                };
                ok &= interval_width(post, design.interval) <= design.w_star_sens;
            }
            if let (Some(dist), Some(analysis)) = (spec_dist.as_ref(), analysis_spec) {
                let healthy = n_t - diseased;
                let theta: f64 = dist.sample(&mut rng);
                let z = binomial(&mut rng, healthy, theta);
                let post = BetaParams {
                    a: analysis.a + z as f64,
                    b: analysis.b + (healthy - z) as f64,
                };
                ok &= interval_width(post, design.interval) <= design.spec_width();
            }
            hits += ok as u64;
        }
        hits
    });
    let hits: u64 = hits.iter().sum();
    let estimate = hits as f64 / reps as f64;
    Ok(MonteCarloEstimate {
        estimate,
        std_error: (estimate * (1.0 - estimate) / reps as f64).sqrt(),
        reps,
    })
}

pub(crate) fn binomial<R: Rng>(rng: &mut R, n: u64, p: f64) -> u64 {
    if n == 0 {
        return 0;
    }
    Binomial::new(n, p.clamp(0.0, 1.0))
        .expect("probability clamped to [0, 1]")
        .sample(rng)
}
