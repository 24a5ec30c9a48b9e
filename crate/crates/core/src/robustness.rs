//! Local prior-sensitivity analysis and prior-data conflict checks.
//!
//! The sensitivity analysis walks a contour of beta priors at a fixed
//! distance from a base prior, re-running the sample-size calculation with
//! each contour prior in turn. Points on the contour are found in polar
//! coordinates around the base shape pair: for each angle the radius is
//! solved so that the distance equals the requested level.

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::assurance::{AssuranceEngine, DesignSpec, PriorSet, DEFAULT_CAP};
use crate::beta::{beta_binomial_pmf_vec, ln_beta_unchecked, posterior_update, BetaParams};
use crate::error::{Error, Result};
use crate::par::Execution;

/// Default number of contour angles.
pub const DEFAULT_ANGLES: usize = 64;

/// `1 - B((a+a0)/2, (b+b0)/2) / sqrt(B(a,b) B(a0,b0))`, i.e. one minus the
/// Bhattacharyya coefficient of two beta densities. In the usual convention
/// this is the squared Hellinger distance.
pub fn squared_hellinger(p1: BetaParams, p2: BetaParams) -> f64 {
    let ln_mid = ln_beta_unchecked(0.5 * (p1.a + p2.a), 0.5 * (p1.b + p2.b));
    let ln_geo = 0.5 * (ln_beta_unchecked(p1.a, p1.b) + ln_beta_unchecked(p2.a, p2.b));
    (-(ln_mid - ln_geo).exp_m1()).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ContourPoint {
    /// Angle in `[-pi, pi)`.
    pub phi: f64,
    /// Radial offset from the base shape pair.
    pub r: f64,
    /// `(a0 + r cos phi, b0 + r sin phi)`.
    pub params: BetaParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct EpsilonContour {
    pub base: BetaParams,
    pub epsilon: f64,
    pub points: Vec<ContourPoint>,
    /// Angles at which a shape parameter reaches zero before the distance
    /// reaches epsilon.
    pub infeasible_angles: Vec<f64>,
    /// Angles along which the distance was not increasing in the radius on
    /// the sampled check points. The reported root still has the requested
    /// distance.
    pub non_monotone_angles: Vec<f64>,
}

enum RadialSolve {
    Root { r: f64, monotone: bool },
    Infeasible,
}

fn offset(base: BetaParams, phi: f64, r: f64) -> BetaParams {
    BetaParams {
        a: base.a + r * phi.cos(),
        b: base.b + r * phi.sin(),
    }
}

fn solve_radius(base: BetaParams, epsilon: f64, phi: f64) -> RadialSolve {
    if epsilon == 0.0 {
        return RadialSolve::Root {
            r: 0.0,
            monotone: true,
        };
    }
    let (c, s) = (phi.cos(), phi.sin());
    let mut r_max = f64::INFINITY;
    if c < 0.0 {
        r_max = r_max.min(base.a / -c);
    }
    if s < 0.0 {
        r_max = r_max.min(base.b / -s);
    }
    let dist = |r: f64| squared_hellinger(offset(base, phi, r), base);

    // bracket by doubling
    let mut lo = 0.0;
    let mut hi = 1e-3 * (base.a + base.b).min(1.0);
    loop {
        if hi >= r_max {
            hi = r_max * (1.0 - 1e-12);
            if dist(hi) < epsilon {
                return RadialSolve::Infeasible;
            }
            break;
        }
        if dist(hi) >= epsilon {
            break;
        }
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return RadialSolve::Infeasible;
        }
    }
    for _ in 0..200 {
        if hi - lo <= 1e-10 * hi.max(1.0) * 1e-2 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if dist(mid) < epsilon {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let r = 0.5 * (lo + hi);

    let checks: Vec<f64> = (1..=16).map(|k| dist(r * k as f64 / 16.0)).collect();
    let monotone = checks.windows(2).all(|w| w[1] > w[0]);
    RadialSolve::Root { r, monotone }
}

/// Priors at distance `epsilon` from `base` on `n_angles` equally spaced
/// angles `phi_k = -pi + 2 pi k / n_angles`.
pub fn epsilon_contour(base: BetaParams, epsilon: f64, n_angles: usize) -> Result<EpsilonContour> {
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::domain(format!(
            "epsilon must be non-negative, got {epsilon}"
        )));
    }
    if epsilon >= 1.0 {
        return Err(Error::Infeasible(format!(
            "no prior lies at distance {epsilon}; distances are below 1"
        )));
    }
    if n_angles < 4 {
        return Err(Error::domain(format!(
            "at least 4 angles are required, got {n_angles}"
        )));
    }
    let mut contour = EpsilonContour {
        base,
        epsilon,
        points: Vec::with_capacity(n_angles),
        infeasible_angles: Vec::new(),
        non_monotone_angles: Vec::new(),
    };
    for k in 0..n_angles {
        let phi = -std::f64::consts::PI + 2.0 * std::f64::consts::PI * k as f64 / n_angles as f64;
        match solve_radius(base, epsilon, phi) {
            RadialSolve::Root { r, monotone } => {
                if !monotone {
                    contour.non_monotone_angles.push(phi);
                }
                contour.points.push(ContourPoint {
                    phi,
                    r,
                    params: offset(base, phi, r),
                });
            }
            RadialSolve::Infeasible => contour.infeasible_angles.push(phi),
        }
    }
    Ok(contour)
}

/// Which prior the sensitivity scan perturbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum PriorSlot {
    Sens,
    Spec,
    Prev,
}

impl PriorSlot {
    pub fn as_str(self) -> &'static str {
        match self {
            PriorSlot::Sens => "sens",
            PriorSlot::Spec => "spec",
            PriorSlot::Prev => "prev",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ScanPoint {
    pub phi: f64,
    pub params: BetaParams,
    /// Minimum sample size under this prior; `None` when not reached by the cap.
    pub n_star: Option<u64>,
    /// Assurance at the evaluation sample size under this prior.
    pub assurance: f64,
}

/// An initial prior and the earlier-stage data that turn it into the prior
/// used for design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct PriorOrigin {
    pub base: BetaParams,
    pub successes: u64,
    pub failures: u64,
    /// Power-prior weight on the counts, in `[0, 1]`.
    pub discount: f64,
}

impl PriorOrigin {
    pub fn updated(&self, initial: BetaParams) -> Result<BetaParams> {
        posterior_update(initial, self.successes, self.failures, self.discount)
    }
}

/// What a sensitivity scan perturbs and how it reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ScanSpec {
    pub vary: PriorSlot,
    pub epsilon: f64,
    pub n_angles: usize,
    /// Sample size at which assurance is reported; the base design's
    /// minimum sample size when absent.
    pub nt_eval: Option<u64>,
    pub cap: u64,
    /// When present the contour is drawn around `origin.base` and every
    /// contour prior is updated with the origin's counts before use; the
    /// varied slot of the prior set is replaced by the updated base.
    pub origin: Option<PriorOrigin>,
}

impl ScanSpec {
    pub fn new(vary: PriorSlot, epsilon: f64) -> Self {
        ScanSpec {
            vary,
            epsilon,
            n_angles: DEFAULT_ANGLES,
            nt_eval: None,
            cap: DEFAULT_CAP,
            origin: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SensitivityReport {
    pub vary: PriorSlot,
    pub epsilon: f64,
    pub n_angles: usize,
    /// Prior the contour is drawn around.
    pub contour_base: BetaParams,
    pub nt_eval: u64,
    /// Minimum sample size under the unperturbed priors.
    pub base_n_star: u64,
    pub n_min: u64,
    pub n_max: u64,
    pub a_min: f64,
    pub a_max: f64,
    /// Contour points whose search hit the cap.
    pub not_found: usize,
    pub infeasible_angles: Vec<f64>,
    pub non_monotone_angles: Vec<f64>,
    pub points: Vec<ScanPoint>,
}

fn slot_prior(priors: &PriorSet, vary: PriorSlot) -> Result<BetaParams> {
    match vary {
        PriorSlot::Sens => Ok(priors.sens),
        PriorSlot::Prev => Ok(priors.prev),
        PriorSlot::Spec => priors.spec.ok_or_else(|| {
            Error::config("priors.spec", "a specificity prior is required to vary it")
        }),
    }
}

fn with_slot(priors: &PriorSet, vary: PriorSlot, p: BetaParams) -> PriorSet {
    let mut out = *priors;
    match vary {
        PriorSlot::Sens => out.sens = p,
        PriorSlot::Spec => out.spec = Some(p),
        PriorSlot::Prev => out.prev = p,
    }
    out
}

/// Substitutes each contour prior into the varied slot and records the
/// minimum sample size and the assurance at the evaluation sample size.
/// Analysis priors that default to the design prior follow the substitution.
pub fn sensitivity_scan(
    priors: &PriorSet,
    design: &DesignSpec,
    scan: &ScanSpec,
    exec: Execution,
) -> Result<SensitivityReport> {
    let vary = scan.vary;
    let (contour_base, priors) = match scan.origin {
        Some(origin) => {
            let updated = origin.updated(origin.base)?;
            (origin.base, with_slot(priors, vary, updated))
        }
        None => (slot_prior(priors, vary)?, *priors),
    };
    let base_engine = AssuranceEngine::new(priors, *design)?.with_execution(exec);
    let base_n_star = base_engine.min_sample_size(scan.cap)?.n_star;
    let nt_eval = match scan.nt_eval {
        Some(0) => return Err(Error::config("study.nt_eval", "must be at least 1")),
        Some(n) => n,
        None => base_n_star,
    };
    let contour = epsilon_contour(contour_base, scan.epsilon, scan.n_angles)?;
    if contour.points.is_empty() {
        return Err(Error::Infeasible(format!(
            "no prior at distance {} from Beta({}, {}) keeps both shapes positive",
            scan.epsilon, contour_base.a, contour_base.b
        )));
    }

    let evaluate = |pt: &ContourPoint| -> Result<ScanPoint> {
        let params = match scan.origin {
            Some(origin) => origin.updated(pt.params)?,
            None => pt.params,
        };
        let engine = match vary {
            PriorSlot::Prev => base_engine.with_prevalence(params),
            PriorSlot::Sens | PriorSlot::Spec => {
                AssuranceEngine::new(with_slot(&priors, vary, params), *design)?
                    .with_execution(exec)
            }
        };
        let n_star = match engine.min_sample_size(scan.cap) {
            Ok(s) => Some(s.n_star),
            Err(Error::NotFound { .. }) => None,
            Err(e) => return Err(e),
        };
        Ok(ScanPoint {
            phi: pt.phi,
            params,
            n_star,
            assurance: engine.assurance(nt_eval),
        })
    };
    let points: Vec<ScanPoint> = exec
        .map_slice(&contour.points, evaluate)
        .into_iter()
        .collect::<Result<_>>()?;

    let found: Vec<u64> = points.iter().filter_map(|p| p.n_star).collect();
    if found.is_empty() {
        return Err(Error::Infeasible(format!(
            "no contour prior reaches the assurance target within {}",
            scan.cap
        )));
    }
    let a_min = points
        .iter()
        .map(|p| p.assurance)
        .fold(f64::INFINITY, f64::min);
    let a_max = points
        .iter()
        .map(|p| p.assurance)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(SensitivityReport {
        vary,
        epsilon: scan.epsilon,
        n_angles: scan.n_angles,
        contour_base,
        nt_eval,
        base_n_star,
        n_min: *found.iter().min().expect("non-empty"),
        n_max: *found.iter().max().expect("non-empty"),
        a_min,
        a_max,
        not_found: points.len() - found.len(),
        infeasible_angles: contour.infeasible_angles,
        non_monotone_angles: contour.non_monotone_angles,
        points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum ConflictFlag {
    Consistent,
    Suspect,
    Conflict,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ConflictLevels {
    pub suspect: f64,
    pub conflict: f64,
}

impl Default for ConflictLevels {
    fn default() -> Self {
        ConflictLevels {
            suspect: 0.95,
            conflict: 0.99,
        }
    }
}

impl ConflictLevels {
    pub fn validate(&self) -> Result<()> {
        if !(0.5 < self.suspect && self.suspect < self.conflict && self.conflict < 1.0) {
            return Err(Error::config(
                "study.conflict.levels",
                format!(
                    "need 0.5 < suspect < conflict < 1, got suspect={} conflict={}",
                    self.suspect, self.conflict
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ConflictReport {
    pub observed: u64,
    pub n: u64,
    pub prior: BetaParams,
    /// Prior predictive mass at the observation.
    pub pmf_observed: f64,
    /// `Pr(Y <= observed)`.
    pub percentile: f64,
    /// `Pr(Y >= observed)`.
    pub tail_upper: f64,
    pub flag: ConflictFlag,
}

/// Locates `observed` in the beta-binomial prior predictive distribution of a
/// count out of `n`. The smaller of the two tail probabilities is compared
/// with `1 - suspect` and `1 - conflict`.
pub fn prior_predictive_check(
    observed: u64,
    n: u64,
    prior: BetaParams,
    levels: ConflictLevels,
) -> Result<ConflictReport> {
    if observed > n {
        return Err(Error::domain(format!(
            "observed count {observed} exceeds {n}"
        )));
    }
    levels.validate()?;
    let pmf = beta_binomial_pmf_vec(n, prior);
    let k = observed as usize;
    let below: f64 = pmf[..k].iter().sum();
    let above: f64 = pmf[k + 1..].iter().sum();
    let at = pmf[k];
    let percentile = if observed == n {
        1.0
    } else {
        (below + at).min(1.0)
    };
    let tail_upper = if observed == 0 {
        1.0
    } else {
        (above + at).min(1.0)
    };
    let extremity = percentile.min(tail_upper);
    let flag = if extremity <= 1.0 - levels.conflict {
        ConflictFlag::Conflict
    } else if extremity <= 1.0 - levels.suspect {
        ConflictFlag::Suspect
    } else {
        ConflictFlag::Consistent
    };
    Ok(ConflictReport {
        observed,
        n,
        prior,
        pmf_observed: at,
        percentile,
        tail_upper,
        flag,
    })
}

/// Prior predictive pmf over `0..=n`, for plotting next to an observation.
pub fn predictive_pmf_series(n: u64, prior: BetaParams) -> Vec<f64> {
    beta_binomial_pmf_vec(n, prior)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct PosteriorSummary {
    pub params: BetaParams,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub alpha: f64,
}

/// Conjugate posterior with its mean and equal-tailed interval.
pub fn posterior_summary(
    prior: BetaParams,
    successes: u64,
    failures: u64,
    alpha: f64,
) -> Result<PosteriorSummary> {
    let params = posterior_update(prior, successes, failures, 1.0)?;
    let (lower, upper) = params.equal_tailed_interval(alpha)?;
    Ok(PosteriorSummary {
        params,
        mean: params.mean(),
        lower,
        upper,
        alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval::IntervalSpec;

    fn bp(a: f64, b: f64) -> BetaParams {
        BetaParams::new(a, b).unwrap()
    }

    #[test]
    fn distance_identity_and_symmetry() {
        assert_eq!(squared_hellinger(bp(2.0, 3.0), bp(2.0, 3.0)), 0.0);
        let (p, q) = (bp(2.0, 3.0), bp(7.5, 0.4));
        assert_eq!(squared_hellinger(p, q), squared_hellinger(q, p));
        assert!(squared_hellinger(bp(1000.0, 1.0), bp(1.0, 1000.0)) <= 1.0);
    }

    #[test]
    fn distance_matches_integral_reference() {
        // 1 - integral of sqrt(f g) at 40 digits
        let d = squared_hellinger(bp(25.9, 2.1), bp(26.9, 2.1));
        assert!((d - 3.618_411_571_513_814_5e-4).abs() < 1e-14, "{d}");
    }

    #[test]
    fn zero_epsilon_contour_is_the_base() {
        let base = bp(25.9, 2.1);
        let c = epsilon_contour(base, 0.0, 8).unwrap();
        assert_eq!(c.points.len(), 8);
        assert!(c.points.iter().all(|p| p.r == 0.0 && p.params == base));
    }

    #[test]
    fn contour_points_sit_at_epsilon() {
        let base = bp(25.9, 2.1);
        let c = epsilon_contour(base, 0.00354, 64).unwrap();
        assert!(c.infeasible_angles.is_empty());
        assert!(c.non_monotone_angles.is_empty());
        assert_eq!(c.points.len(), 64);
        for p in &c.points {
            let d = squared_hellinger(p.params, base);
            assert!((d - 0.00354).abs() < 1e-8, "phi={} d={d}", p.phi);
            assert!(p.params.a > 0.0 && p.params.b > 0.0);
        }
    }

    #[test]
    fn contour_argument_checks() {
        let base = bp(2.0, 2.0);
        assert!(epsilon_contour(base, 1.0, 8).is_err());
        assert!(epsilon_contour(base, -0.1, 8).is_err());
        assert!(epsilon_contour(base, 0.1, 3).is_err());
    }

    #[test]
    fn distance_tends_to_one_at_the_boundary() {
        // the distance approaches 1 as a shape goes to zero, so even a large
        // level stays reachable from a small base
        let c = epsilon_contour(bp(0.3, 0.3), 0.9, 16).unwrap();
        assert!(c.infeasible_angles.is_empty());
        for p in &c.points {
            assert!(p.params.a > 0.0 && p.params.b > 0.0);
            assert!((squared_hellinger(p.params, c.base) - 0.9).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_epsilon_scan_is_degenerate() {
        let priors = PriorSet::new(bp(25.9, 2.1), bp(29.0, 98.0));
        let design =
            DesignSpec::sensitivity(0.16, IntervalSpec::two_sided(0.05).unwrap(), 0.8).unwrap();
        let base = AssuranceEngine::new(priors, design).unwrap();
        let n = base.min_sample_size(1000).unwrap().n_star;
        let scan = ScanSpec {
            n_angles: 8,
            cap: 1000,
            ..ScanSpec::new(PriorSlot::Prev, 0.0)
        };
        let rep = sensitivity_scan(&priors, &design, &scan, Execution::default()).unwrap();
        assert_eq!((rep.n_min, rep.n_max), (n, n));
        assert_eq!(rep.base_n_star, n);
        assert_eq!(rep.a_min, rep.a_max);
        assert_eq!(rep.a_min, base.assurance(n));
    }

    #[test]
    fn origin_replaces_the_varied_slot() {
        let priors = PriorSet::new(bp(1.0, 1.0), bp(29.0, 98.0));
        let design =
            DesignSpec::sensitivity(0.16, IntervalSpec::two_sided(0.05).unwrap(), 0.8).unwrap();
        let origin = PriorOrigin {
            base: bp(9.9, 1.1),
            successes: 16,
            failures: 1,
            discount: 1.0,
        };
        let scan = ScanSpec {
            n_angles: 8,
            origin: Some(origin),
            ..ScanSpec::new(PriorSlot::Sens, 0.0)
        };
        let rep = sensitivity_scan(&priors, &design, &scan, Execution::Sequential).unwrap();
        assert_eq!(rep.contour_base, bp(9.9, 1.1));
        assert_eq!(rep.base_n_star, 104);
        let p = rep.points[0].params;
        assert!((p.a - 25.9).abs() < 1e-12 && (p.b - 2.1).abs() < 1e-12);
    }

    #[test]
    fn missing_spec_prior_cannot_be_varied() {
        let priors = PriorSet::new(bp(25.9, 2.1), bp(29.0, 98.0));
        let design =
            DesignSpec::sensitivity(0.16, IntervalSpec::two_sided(0.05).unwrap(), 0.8).unwrap();
        let r = sensitivity_scan(
            &priors,
            &design,
            &ScanSpec::new(PriorSlot::Spec, 0.01),
            Execution::Sequential,
        );
        assert!(matches!(r, Err(Error::Config { .. })));
    }

    #[test]
    fn vap_conflict_percentiles() {
        let prev =
            prior_predictive_check(53, 150, bp(29.0, 98.0), ConflictLevels::default()).unwrap();
        assert!(
            (0.985..=0.995).contains(&prev.percentile),
            "{}",
            prev.percentile
        );
        assert_ne!(prev.flag, ConflictFlag::Consistent);
        let sens =
            prior_predictive_check(51, 53, bp(25.9, 2.1), ConflictLevels::default()).unwrap();
        assert!(
            (0.73..=0.79).contains(&sens.percentile),
            "{}",
            sens.percentile
        );
        assert_eq!(sens.flag, ConflictFlag::Consistent);
    }

    #[test]
    fn observation_at_the_top() {
        let r = prior_predictive_check(20, 20, bp(3.0, 2.0), ConflictLevels::default()).unwrap();
        assert_eq!(r.percentile, 1.0);
        assert!((r.tail_upper + r.percentile - r.pmf_observed - 1.0).abs() < 1e-10);
    }

    #[test]
    fn observation_at_the_mode_is_consistent() {
        let prior = bp(29.0, 98.0);
        let pmf = predictive_pmf_series(150, prior);
        let mode = pmf
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0 as u64;
        let r = prior_predictive_check(mode, 150, prior, ConflictLevels::default()).unwrap();
        assert_eq!(r.flag, ConflictFlag::Consistent);
        assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn conflict_argument_checks() {
        assert!(prior_predictive_check(5, 4, bp(1.0, 1.0), ConflictLevels::default()).is_err());
        let bad = ConflictLevels {
            suspect: 0.99,
            conflict: 0.95,
        };
        assert!(prior_predictive_check(1, 4, bp(1.0, 1.0), bad).is_err());
    }

    #[test]
    fn prevalence_posteriors_after_accuracy_study() {
        let flat = posterior_summary(BetaParams::uniform(), 53, 97, 0.05).unwrap();
        assert!((flat.mean - 0.355).abs() <= 0.002);
        assert!((flat.lower - 0.281).abs() <= 0.002 && (flat.upper - 0.433).abs() <= 0.002);
        let informed = posterior_summary(bp(29.0, 98.0), 53, 97, 0.05).unwrap();
        assert!((informed.mean - 0.296).abs() <= 0.002);
        assert_eq!(informed.params, bp(82.0, 195.0));
    }
}
