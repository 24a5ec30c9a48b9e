//! Frequentist comparators and the two comparison studies.
//!
//! The frequentist methods size the diseased group so that a Wald,
//! Clopper-Pearson or Agresti-Coull interval meets the width target with a
//! given power, either from the normal-approximation formula or by
//! simulation, and scale the group size to a total by the estimated
//! prevalence. The scenario grid sets those sizes beside assurance-based
//! ones; the width study follows the whole design-then-analyse pipeline and
//! records the interval widths each method actually delivers.

use std::sync::atomic::{AtomicUsize, Ordering};

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::assurance::{binomial, AssuranceEngine, DesignSpec, PriorSet, DEFAULT_CAP};
use crate::beta::{quantile_unchecked, standard_normal_quantile, BetaParams};
use crate::error::{Error, Result};
use crate::interval::{interval_width, IntervalSpec};
use crate::par::{Execution, Monitor};
use crate::rng;

/// Replicates per candidate sample size in simulation-based sizing.
pub const DEFAULT_SIM_REPS: u64 = 10_000;
/// Fewest replicates accepted by simulation-based sizing.
pub const MIN_SIM_REPS: u64 = 1_000;
/// Largest group size a simulation-based search visits.
pub const DEFAULT_GROUP_CAP: u64 = 10_000;

const SIM_TAG: u64 = 0x51_5A;
const WIDTH_TAG: u64 = 0x3D_17;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum IntervalMethod {
    Wald,
    ClopperPearson,
    AgrestiCoull,
}

impl IntervalMethod {
    pub const ALL: [IntervalMethod; 3] = [
        IntervalMethod::Wald,
        IntervalMethod::ClopperPearson,
        IntervalMethod::AgrestiCoull,
    ];
}

/// Confidence interval for a binomial proportion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct FreqInterval {
    pub lower: f64,
    pub upper: f64,
    pub method: IntervalMethod,
}

impl FreqInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    Ok(())
}

fn check_counts(x: u64, n: u64) -> Result<()> {
    if n == 0 {
        return Err(Error::domain("an interval needs at least one trial"));
    }
    if x > n {
        return Err(Error::domain(format!("successes {x} exceed trials {n}")));
    }
    Ok(())
}

fn z_two_sided(alpha: f64) -> f64 {
    standard_normal_quantile(1.0 - 0.5 * alpha)
}

fn limits(method: IntervalMethod, x: u64, n: u64, alpha: f64, z: f64) -> (f64, f64) {
    let (xf, nf) = (x as f64, n as f64);
    match method {
        IntervalMethod::Wald => {
            let p = xf / nf;
            let half = z * (p * (1.0 - p) / nf).sqrt();
            ((p - half).max(0.0), (p + half).min(1.0))
        }
        IntervalMethod::ClopperPearson => {
            let lower = if x == 0 {
                0.0
            } else {
                quantile_unchecked(0.5 * alpha, xf, nf - xf + 1.0)
            };
            let upper = if x == n {
                1.0
            } else {
                quantile_unchecked(1.0 - 0.5 * alpha, xf + 1.0, nf - xf)
            };
            (lower, upper)
        }
        IntervalMethod::AgrestiCoull => {
            let z2 = z * z;
            let nt = nf + z2;
            let p = (xf + 0.5 * z2) / nt;
            let half = z * (p * (1.0 - p) / nt).sqrt();
            ((p - half).max(0.0), (p + half).min(1.0))
        }
    }
}

/// Interval for `x` successes in `n` trials by the given method.
pub fn frequentist_interval(
    method: IntervalMethod,
    x: u64,
    n: u64,
    alpha: f64,
) -> Result<FreqInterval> {
    check_counts(x, n)?;
    check_alpha(alpha)?;
    let (lower, upper) = limits(method, x, n, alpha, z_two_sided(alpha));
    Ok(FreqInterval {
        lower,
        upper,
        method,
    })
}

/// Normal-approximation interval `p ± z sqrt(p(1-p)/n)`, truncated to [0, 1].
pub fn wald_interval(x: u64, n: u64, alpha: f64) -> Result<FreqInterval> {
    frequentist_interval(IntervalMethod::Wald, x, n, alpha)
}

/// Exact interval from beta quantiles.
pub fn clopper_pearson_interval(x: u64, n: u64, alpha: f64) -> Result<FreqInterval> {
    frequentist_interval(IntervalMethod::ClopperPearson, x, n, alpha)
}

/// Wald-type interval about the adjusted centre `(x + z^2/2) / (n + z^2)`.
pub fn agresti_coull_interval(x: u64, n: u64, alpha: f64) -> Result<FreqInterval> {
    frequentist_interval(IntervalMethod::AgrestiCoull, x, n, alpha)
}

/// Normal-approximation group size
/// `ceil(((z_{alpha/2} + z_beta) sqrt(l(1-l)))^2 / (w/2)^2)`.
pub fn wald_sample_size(lambda_hat: f64, alpha: f64, beta: f64, w_star: f64) -> Result<u64> {
    if !(lambda_hat > 0.0 && lambda_hat < 1.0) {
        return Err(Error::domain(format!(
            "estimated proportion must lie strictly inside (0, 1), got {lambda_hat}"
        )));
    }
    check_alpha(alpha)?;
    check_power(beta)?;
    check_width(w_star)?;
    let z = z_two_sided(alpha) + standard_normal_quantile(beta);
    let n = z * z * lambda_hat * (1.0 - lambda_hat) / (0.25 * w_star * w_star);
    Ok(ceil_tol(n).max(1))
}

fn check_power(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::domain(format!(
            "power must lie in (0, 1), got {beta}"
        )));
    }
    Ok(())
}

fn check_width(w_star: f64) -> Result<()> {
    if !(w_star > 0.0 && w_star < 1.0) {
        return Err(Error::domain(format!(
            "width target must lie in (0, 1), got {w_star}"
        )));
    }
    Ok(())
}

/// Ceiling that ignores floating-point noise just above an integer.
fn ceil_tol(v: f64) -> u64 {
    (v - 1e-9).ceil().max(0.0) as u64
}

/// Which group a sample size refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Disease,
    NonDisease,
}

/// Total recruitment needed to expect `n_group` individuals in `group`.
pub fn total_from_group(n_group: u64, prev_hat: f64, group: Group) -> Result<u64> {
    if !(prev_hat > 0.0 && prev_hat < 1.0) {
        return Err(Error::domain(format!(
            "estimated prevalence must lie strictly inside (0, 1), got {prev_hat}"
        )));
    }
    let share = match group {
        Group::Disease => prev_hat,
        Group::NonDisease => 1.0 - prev_hat,
    };
    Ok(ceil_tol(n_group as f64 / share))
}

/// Fraction of `reps` simulated studies of size `n` whose interval is no
/// wider than `w_star`. Zero-width intervals (Wald at `x = 0` or `x = n`)
/// count as failures.
///
/// Draws come from a stream keyed by the true proportion and `n` only, so
/// every method sees the same simulated counts.
pub fn empirical_power(
    method: IntervalMethod,
    lambda: f64,
    alpha: f64,
    w_star: f64,
    n: u64,
    reps: u64,
    seed: u64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::domain(format!(
            "proportion must lie in [0, 1], got {lambda}"
        )));
    }
    check_alpha(alpha)?;
    if n == 0 || reps == 0 {
        return Err(Error::domain("trials and replicates must be positive"));
    }
    Ok(power_unchecked(
        method, lambda, alpha, w_star, n, reps, seed,
    ))
}

fn power_unchecked(
    method: IntervalMethod,
    lambda: f64,
    alpha: f64,
    w_star: f64,
    n: u64,
    reps: u64,
    seed: u64,
) -> f64 {
    let mut rng = rng::stream(seed, &[SIM_TAG, lambda.to_bits(), n]);
    let dist = Binomial::new(n, lambda).expect("proportion checked");
    let mut counts = vec![0u64; n as usize + 1];
    for _ in 0..reps {
        counts[dist.sample(&mut rng) as usize] += 1;
    }
    let z = z_two_sided(alpha);
    let hits: u64 = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .filter(|&(x, _)| {
            let (lo, hi) = limits(method, x as u64, n, alpha, z);
            let w = hi - lo;
            w > 0.0 && w <= w_star
        })
        .map(|(_, &c)| c)
        .sum();
    hits as f64 / reps as f64
}

/// Result of a simulation-based group size search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SimulatedSize {
    pub n_group: u64,
    /// Empirical power at `n_group`.
    pub power: f64,
    /// Empirical power at `n_group - 1` (0 when `n_group` is 1).
    pub power_below: f64,
}

/// Smallest group size whose empirical power reaches `beta`.
///
/// Power is not monotone in `n` for discrete intervals. Doubling brackets a
/// crossing and bisection narrows it to a size that reaches `beta` while the
/// size one below does not.
#[allow(clippy::too_many_arguments)]
pub fn simulated_sample_size(
    method: IntervalMethod,
    lambda_hat: f64,
    alpha: f64,
    beta: f64,
    w_star: f64,
    reps: u64,
    seed: u64,
    cap: u64,
) -> Result<SimulatedSize> {
    if !(0.0..=1.0).contains(&lambda_hat) {
        return Err(Error::domain(format!(
            "estimated proportion must lie in [0, 1], got {lambda_hat}"
        )));
    }
    check_alpha(alpha)?;
    check_power(beta)?;
    check_width(w_star)?;
    if reps < MIN_SIM_REPS {
        return Err(Error::config(
            "study.reps",
            format!("at least {MIN_SIM_REPS} replicates are required, got {reps}"),
        ));
    }
    if cap == 0 {
        return Err(Error::config("study.cap", "cap must be at least 1"));
    }
    let power = |n: u64| power_unchecked(method, lambda_hat, alpha, w_star, n, reps, seed);

    let (mut lo, mut p_lo) = (0u64, 0.0);
    let mut hi = 1u64;
    let mut p_hi = power(hi);
    while p_hi < beta {
        if hi >= cap {
            return Err(Error::NotFound { cap, target: beta });
        }
        (lo, p_lo) = (hi, p_hi);
        hi = (hi * 2).min(cap);
        p_hi = power(hi);
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        let p = power(mid);
        if p >= beta {
            (hi, p_hi) = (mid, p);
        } else {
            (lo, p_lo) = (mid, p);
        }
    }
    Ok(SimulatedSize {
        n_group: hi,
        power: p_hi,
        power_below: p_lo,
    })
}

/// Design priors built from an analytical validity study of `av_size`
/// individuals with the given sensitivity and prevalence, using expected
/// counts: sensitivity `Beta(n0 l r, n0 r (1 - l))`, prevalence
/// `Beta(n0 r, n0 (1 - r))`.
pub fn expected_count_priors(sens: f64, prev: f64, av_size: u64) -> Result<PriorSet> {
    let n0 = av_size as f64;
    let sens_prior = BetaParams::new(n0 * sens * prev, n0 * prev * (1.0 - sens))?;
    let prev_prior = BetaParams::new(n0 * prev, n0 * (1.0 - prev))?;
    Ok(PriorSet::new(sens_prior, prev_prior))
}

/// One comparison setting: true accuracy and prevalence, analytical validity
/// study size and the sizing targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ComparisonScenario {
    pub sens_true: f64,
    pub prev_true: f64,
    pub av_size: u64,
    pub alpha: f64,
    pub beta: f64,
    pub w_star: f64,
    pub seed: u64,
}

impl ComparisonScenario {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        for (field, v) in [
            ("sens_true", self.sens_true),
            ("prev_true", self.prev_true),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("w_star", self.w_star),
        ] {
            if !unit(v) {
                return Err(Error::config(
                    format!("study.{field}"),
                    format!("must lie in (0, 1), got {v}"),
                ));
            }
        }
        if self.av_size == 0 {
            return Err(Error::config("study.av_size", "must be at least 1"));
        }
        Ok(())
    }

    pub fn priors(&self) -> Result<PriorSet> {
        expected_count_priors(self.sens_true, self.prev_true, self.av_size)
    }

    pub fn design(&self) -> Result<DesignSpec> {
        DesignSpec::sensitivity(self.w_star, IntervalSpec::two_sided(self.alpha)?, self.beta)
    }

    /// Assurance-based total sample size, optionally with a Beta(1, 1)
    /// analysis prior for the sensitivity.
    pub fn assurance_size(&self, non_informative: bool, cap: u64, exec: Execution) -> Result<u64> {
        self.validate()?;
        let mut priors = self.priors()?;
        if non_informative {
            priors = priors.with_analysis_sens(BetaParams::uniform());
        }
        let engine = AssuranceEngine::new(priors, self.design()?)?.with_execution(exec);
        Ok(engine.min_sample_size(cap)?.n_star)
    }
}

/// How a row of a comparison table was sized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum SizingMethod {
    /// Closed-form normal approximation.
    WaldFormula,
    Wald,
    ClopperPearson,
    AgrestiCoull,
    /// Assurance with the analysis prior equal to the design prior.
    Assurance,
    /// Assurance with a Beta(1, 1) analysis prior.
    AssuranceNonInformative,
}

impl From<IntervalMethod> for SizingMethod {
    fn from(m: IntervalMethod) -> Self {
        match m {
            IntervalMethod::Wald => SizingMethod::Wald,
            IntervalMethod::ClopperPearson => SizingMethod::ClopperPearson,
            IntervalMethod::AgrestiCoull => SizingMethod::AgrestiCoull,
        }
    }
}

fn linspace(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![lo];
    }
    (0..k)
        .map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64)
        .collect()
}

/// Sweep over true sensitivity and prevalence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub sens: Vec<f64>,
    pub prev: Vec<f64>,
    /// Analytical validity study sizes for the assurance rows.
    pub av_sizes: Vec<u64>,
    /// Study size behind the design prior of the non-informative rows.
    pub non_informative_av_size: u64,
    pub alpha: f64,
    pub beta: f64,
    pub w_star: f64,
    /// Replicates per candidate size for the simulated methods.
    pub reps: u64,
    pub seed: u64,
    /// Cap on group size (simulated methods) and total size (assurance).
    pub cap: u64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            sens: linspace(0.6, 0.9, 4),
            prev: linspace(0.15, 0.95, 4),
            av_sizes: vec![25, 50, 75],
            non_informative_av_size: 25,
            alpha: 0.05,
            beta: 0.8,
            w_star: 0.18,
            reps: DEFAULT_SIM_REPS,
            seed: 20_240_601,
            cap: DEFAULT_CAP,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        for (field, values) in [("study.sens", &self.sens), ("study.prev", &self.prev)] {
            if values.is_empty() {
                return Err(Error::config(field, "at least one value is required"));
            }
            if let Some(v) = values.iter().find(|v| !unit(**v)) {
                return Err(Error::config(
                    field,
                    format!("values must lie in (0, 1), got {v}"),
                ));
            }
        }
        if self.av_sizes.contains(&0) || self.non_informative_av_size == 0 {
            return Err(Error::config(
                "study.av_sizes",
                "study sizes must be at least 1",
            ));
        }
        for (field, v) in [
            ("study.alpha", self.alpha),
            ("study.beta", self.beta),
            ("study.w_star", self.w_star),
        ] {
            if !unit(v) {
                return Err(Error::config(field, format!("must lie in (0, 1), got {v}")));
            }
        }
        if self.reps < MIN_SIM_REPS {
            return Err(Error::config(
                "study.reps",
                format!(
                    "at least {MIN_SIM_REPS} replicates are required, got {}",
                    self.reps
                ),
            ));
        }
        if self.cap == 0 {
            return Err(Error::config("study.cap", "cap must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct GridRow {
    pub sens_true: f64,
    pub prev_true: f64,
    pub method: SizingMethod,
    /// Analytical validity study size behind the assurance priors.
    pub av_size: Option<u64>,
    /// Diseased-group size (frequentist methods only).
    pub n_group: Option<u64>,
    /// Total sample size; `None` when the cap was reached first.
    pub n_t: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ScenarioGrid {
    pub spec: GridSpec,
    pub rows: Vec<GridRow>,
}

impl ScenarioGrid {
    pub fn size(
        &self,
        sens: f64,
        prev: f64,
        method: SizingMethod,
        av_size: Option<u64>,
    ) -> Option<u64> {
        self.rows
            .iter()
            .find(|r| {
                r.sens_true == sens
                    && r.prev_true == prev
                    && r.method == method
                    && r.av_size == av_size
            })
            .and_then(|r| r.n_t)
    }
}

fn found(r: Result<u64>) -> Result<Option<u64>> {
    match r {
        Ok(n) => Ok(Some(n)),
        Err(Error::NotFound { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Sample sizes by every method over the sensitivity/prevalence grid.
///
/// Frequentist sizes use the true parameter values; assurance uses the
/// expected-count priors of [`expected_count_priors`].
pub fn scenario_grid(
    spec: &GridSpec,
    exec: Execution,
    monitor: Monitor<'_>,
) -> Result<ScenarioGrid> {
    spec.validate()?;
    let design =
        DesignSpec::sensitivity(spec.w_star, IntervalSpec::two_sided(spec.alpha)?, spec.beta)?;

    #[derive(Clone, Copy)]
    enum Task {
        Freq(usize, IntervalMethod),
        Bam(usize, usize, Option<u64>),
    }
    let mut tasks = Vec::new();
    for (i, _) in spec.sens.iter().enumerate() {
        for m in IntervalMethod::ALL {
            tasks.push(Task::Freq(i, m));
        }
        for (j, _) in spec.prev.iter().enumerate() {
            for &n0 in &spec.av_sizes {
                tasks.push(Task::Bam(i, j, Some(n0)));
            }
            tasks.push(Task::Bam(i, j, None));
        }
    }
    let total = tasks.len();
    let done = AtomicUsize::new(0);
    let results = exec.map_slice(&tasks, |task| -> Result<Option<u64>> {
        if monitor.is_cancelled() {
            return Err(Error::Cancelled);
        }
        let out = match *task {
            Task::Freq(i, m) => found(
                simulated_sample_size(
                    m,
                    spec.sens[i],
                    spec.alpha,
                    spec.beta,
                    spec.w_star,
                    spec.reps,
                    spec.seed,
                    spec.cap,
                )
                .map(|s| s.n_group),
            )?,
            Task::Bam(i, j, n0) => {
                let mut priors = expected_count_priors(
                    spec.sens[i],
                    spec.prev[j],
                    n0.unwrap_or(spec.non_informative_av_size),
                )?;
                if n0.is_none() {
                    priors = priors.with_analysis_sens(BetaParams::uniform());
                }
                let engine =
                    AssuranceEngine::new(priors, design)?.with_execution(Execution::Sequential);
                found(engine.min_sample_size(spec.cap).map(|s| s.n_star))?
            }
        };
        monitor.report(done.fetch_add(1, Ordering::Relaxed) + 1, total);
        Ok(out)
    });

    let mut freq = vec![[None; 3]; spec.sens.len()];
    let mut rows = Vec::new();
    for (task, res) in tasks.iter().zip(results) {
        let n = res?;
        match *task {
            Task::Freq(i, m) => {
                let k = IntervalMethod::ALL
                    .iter()
                    .position(|x| *x == m)
                    .expect("listed method");
                freq[i][k] = n;
            }
            Task::Bam(i, j, n0) => rows.push(GridRow {
                sens_true: spec.sens[i],
                prev_true: spec.prev[j],
                method: if n0.is_some() {
                    SizingMethod::Assurance
                } else {
                    SizingMethod::AssuranceNonInformative
                },
                av_size: n0.or(Some(spec.non_informative_av_size)),
                n_group: None,
                n_t: n,
            }),
        }
    }

    let mut out = Vec::with_capacity(rows.len() + spec.sens.len() * spec.prev.len() * 4);
    for (i, &l) in spec.sens.iter().enumerate() {
        let formula = wald_sample_size(l, spec.alpha, spec.beta, spec.w_star)?;
        for &r in &spec.prev {
            let scale = |n: Option<u64>| -> Result<Option<u64>> {
                n.map(|n| total_from_group(n, r, Group::Disease))
                    .transpose()
            };
            out.push(GridRow {
                sens_true: l,
                prev_true: r,
                method: SizingMethod::WaldFormula,
                av_size: None,
                n_group: Some(formula),
                n_t: scale(Some(formula))?,
            });
            for (k, m) in IntervalMethod::ALL.iter().enumerate() {
                out.push(GridRow {
                    sens_true: l,
                    prev_true: r,
                    method: (*m).into(),
                    av_size: None,
                    n_group: freq[i][k],
                    n_t: scale(freq[i][k])?,
                });
            }
            out.extend(
                rows.iter()
                    .filter(|row| row.sens_true == l && row.prev_true == r),
            );
        }
    }
    Ok(ScenarioGrid {
        spec: spec.clone(),
        rows: out,
    })
}

/// Repeated design-then-analyse simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct WidthStudySpec {
    pub beta: f64,
    pub w_star: f64,
    pub alpha: f64,
    /// Size of the simulated analytical validity study.
    pub av_size: u64,
    /// Number of simulated design-then-analyse cycles.
    pub reps: u64,
    /// Replicates per candidate size for the simulated methods.
    pub sim_reps: u64,
    pub seed: u64,
    pub cap: u64,
    /// Range of the uniform draw of the true sensitivity.
    pub sens_range: (f64, f64),
    /// Range of the uniform draw of the true prevalence.
    pub prev_range: (f64, f64),
}

impl Default for WidthStudySpec {
    fn default() -> Self {
        WidthStudySpec {
            beta: 0.5,
            w_star: 0.18,
            alpha: 0.05,
            av_size: 50,
            reps: 100,
            sim_reps: DEFAULT_SIM_REPS,
            seed: 20_240_602,
            cap: DEFAULT_CAP,
            sens_range: (0.6, 0.9),
            prev_range: (0.15, 0.95),
        }
    }
}

/// Fewest cycles accepted by the width study.
pub const MIN_WIDTH_REPS: u64 = 100;

impl WidthStudySpec {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        for (field, v) in [
            ("study.beta", self.beta),
            ("study.w_star", self.w_star),
            ("study.alpha", self.alpha),
        ] {
            if !unit(v) {
                return Err(Error::config(field, format!("must lie in (0, 1), got {v}")));
            }
        }
        for (field, (lo, hi)) in [
            ("study.sens_range", self.sens_range),
            ("study.prev_range", self.prev_range),
        ] {
            if !(unit(lo) && unit(hi) && lo <= hi) {
                return Err(Error::config(
                    field,
                    format!("need 0 < lo <= hi < 1, got ({lo}, {hi})"),
                ));
            }
        }
        if self.av_size == 0 {
            return Err(Error::config("study.av_size", "must be at least 1"));
        }
        if self.reps < MIN_WIDTH_REPS {
            return Err(Error::config(
                "study.reps",
                format!(
                    "at least {MIN_WIDTH_REPS} cycles are required, got {}",
                    self.reps
                ),
            ));
        }
        if self.sim_reps < MIN_SIM_REPS {
            return Err(Error::config(
                "study.sim_reps",
                format!(
                    "at least {MIN_SIM_REPS} replicates are required, got {}",
                    self.sim_reps
                ),
            ));
        }
        if self.cap == 0 {
            return Err(Error::config("study.cap", "cap must be at least 1"));
        }
        Ok(())
    }
}

/// Methods compared in the width study.
pub const WIDTH_METHODS: [SizingMethod; 5] = [
    SizingMethod::Wald,
    SizingMethod::ClopperPearson,
    SizingMethod::AgrestiCoull,
    SizingMethod::Assurance,
    SizingMethod::AssuranceNonInformative,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct WidthRow {
    pub rep: u64,
    pub sens_true: f64,
    pub prev_true: f64,
    /// Diseased individuals in the simulated analytical validity study.
    pub av_diseased: u64,
    /// Of those, positive on the index test.
    pub av_true_positive: u64,
    pub method: SizingMethod,
    /// Total sample size chosen by the method; `None` when capped.
    pub n_t: Option<u64>,
    /// Diseased individuals in the simulated accuracy study.
    pub n_diseased: u64,
    /// Realised interval width; 1 when the study had no diseased individuals.
    pub width: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct WidthSummary {
    pub method: SizingMethod,
    pub count: u64,
    pub median: f64,
    pub lower_quartile: f64,
    pub upper_quartile: f64,
    pub p70: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct WidthStudy {
    pub spec: WidthStudySpec,
    pub rows: Vec<WidthRow>,
    pub summaries: Vec<WidthSummary>,
}

impl WidthStudy {
    pub fn summary(&self, method: SizingMethod) -> Option<&WidthSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }
}

/// Linear-interpolation sample quantile of sorted data.
fn quantile_sorted(v: &[f64], p: f64) -> f64 {
    let h = p * (v.len() - 1) as f64;
    let i = h.floor() as usize;
    let j = (i + 1).min(v.len() - 1);
    v[i] + (h - i as f64) * (v[j] - v[i])
}

fn summarise(method: SizingMethod, rows: &[WidthRow]) -> Option<WidthSummary> {
    let mut w: Vec<f64> = rows
        .iter()
        .filter(|r| r.method == method)
        .filter_map(|r| r.width)
        .collect();
    if w.is_empty() {
        return None;
    }
    w.sort_by(f64::total_cmp);
    Some(WidthSummary {
        method,
        count: w.len() as u64,
        median: quantile_sorted(&w, 0.5),
        lower_quartile: quantile_sorted(&w, 0.25),
        upper_quartile: quantile_sorted(&w, 0.75),
        p70: quantile_sorted(&w, 0.7),
        min: w[0],
        max: w[w.len() - 1],
    })
}

/// Estimate from `x` of `n`, kept half an observation away from 0 and 1.
fn clamped_estimate(x: u64, n: u64) -> f64 {
    if n == 0 {
        return 0.5;
    }
    let half = 0.5 / n as f64;
    (x as f64 / n as f64).clamp(half, 1.0 - half)
}

fn width_cycle(spec: &WidthStudySpec, rep: u64) -> Result<Vec<WidthRow>> {
    let mut rng = rng::stream(spec.seed, &[WIDTH_TAG, rep]);
    let sens = rng.random_range(spec.sens_range.0..=spec.sens_range.1);
    let prev = rng.random_range(spec.prev_range.0..=spec.prev_range.1);
    let av_diseased = binomial(&mut rng, spec.av_size, prev);
    let av_tp = binomial(&mut rng, av_diseased, sens);
    let sim_seed: u64 = rng.random();

    let sens_hat = clamped_estimate(av_tp, av_diseased);
    let prev_hat = clamped_estimate(av_diseased, spec.av_size);
    let interval = IntervalSpec::two_sided(spec.alpha)?;
    let design = DesignSpec::sensitivity(spec.w_star, interval, spec.beta)?;
    let priors = PriorSet::new(
        BetaParams::new(1.0 + av_tp as f64, 1.0 + (av_diseased - av_tp) as f64)?,
        BetaParams::new(
            1.0 + av_diseased as f64,
            1.0 + (spec.av_size - av_diseased) as f64,
        )?,
    );

    let mut rows = Vec::with_capacity(WIDTH_METHODS.len());
    for (k, &method) in WIDTH_METHODS.iter().enumerate() {
        let analysis = match method {
            SizingMethod::AssuranceNonInformative => BetaParams::uniform(),
            _ => priors.sens,
        };
        let n_t = match method {
            SizingMethod::Wald | SizingMethod::ClopperPearson | SizingMethod::AgrestiCoull => {
                let m = interval_method(method);
                found(
                    simulated_sample_size(
                        m,
                        sens_hat,
                        spec.alpha,
                        spec.beta,
                        spec.w_star,
                        spec.sim_reps,
                        sim_seed,
                        spec.cap,
                    )
                    .and_then(|s| total_from_group(s.n_group, prev_hat, Group::Disease)),
                )?
            }
            _ => {
                let engine = AssuranceEngine::new(priors.with_analysis_sens(analysis), design)?
                    .with_execution(Execution::Sequential);
                found(engine.min_sample_size(spec.cap).map(|s| s.n_star))?
            }
        };
        let mut study = rng::stream(spec.seed, &[WIDTH_TAG, rep, k as u64]);
        let (n_diseased, width) = match n_t {
            None => (0, None),
            Some(n) => {
                let d = binomial(&mut study, n, prev);
                let tp = binomial(&mut study, d, sens);
                let w = if d == 0 {
                    1.0
                } else if matches!(
                    method,
                    SizingMethod::Assurance | SizingMethod::AssuranceNonInformative
                ) {
                    let post =
                        BetaParams::new(analysis.a + tp as f64, analysis.b + (d - tp) as f64)?;
                    interval_width(post, interval)
                } else {
                    frequentist_interval(interval_method(method), tp, d, spec.alpha)?.width()
                };
                (d, Some(w))
            }
        };
        rows.push(WidthRow {
            rep,
            sens_true: sens,
            prev_true: prev,
            av_diseased,
            av_true_positive: av_tp,
            method,
            n_t,
            n_diseased,
            width,
        });
    }
    Ok(rows)
}

fn interval_method(m: SizingMethod) -> IntervalMethod {
    match m {
        SizingMethod::ClopperPearson => IntervalMethod::ClopperPearson,
        SizingMethod::AgrestiCoull => IntervalMethod::AgrestiCoull,
        _ => IntervalMethod::Wald,
    }
}

/// Realised interval widths when each method sizes and then analyses a
/// simulated accuracy study.
///
/// Each cycle draws a true sensitivity and prevalence uniformly from the
/// configured ranges, simulates the analytical validity study, derives
/// point estimates (for the frequentist methods) and `Beta(1 + counts)`
/// priors (for assurance), sizes the study by every method, simulates it at
/// the true values and records the width of the resulting interval.
pub fn width_study(
    spec: &WidthStudySpec,
    exec: Execution,
    monitor: Monitor<'_>,
) -> Result<WidthStudy> {
    spec.validate()?;
    let total = spec.reps as usize;
    let done = AtomicUsize::new(0);
    let cycles = exec.map_range(0..total, |rep| -> Result<Vec<WidthRow>> {
        if monitor.is_cancelled() {
            return Err(Error::Cancelled);
        }
        let rows = width_cycle(spec, rep as u64)?;
        monitor.report(done.fetch_add(1, Ordering::Relaxed) + 1, total);
        Ok(rows)
    });
    let mut rows = Vec::with_capacity(total * WIDTH_METHODS.len());
    for c in cycles {
        rows.extend(c?);
    }
    let summaries = WIDTH_METHODS
        .iter()
        .filter_map(|&m| summarise(m, &rows))
        .collect();
    Ok(WidthStudy {
        spec: spec.clone(),
        rows,
        summaries,
    })
}
