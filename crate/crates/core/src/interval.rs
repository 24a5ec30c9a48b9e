//! Posterior interval widths and the critical set of success counts.
//!
//! For a fixed group size the posterior variance of a proportion is a
//! concave quadratic in the success count, so the counts whose interval is
//! too wide form one contiguous run. The counts that meet the width target
//! are the two tails `y <= c1` and `y >= c2` around that run.

use std::collections::HashMap;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::beta::{quantile_unchecked, BetaParams};
use crate::error::{Error, Result};

/// Group sizes up to this bound get a full scan of every count; above it the
/// boundaries are located by bisection around the widest count.
pub const SCAN_LIMIT: u64 = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Sidedness {
    /// Equal-tailed interval `(q(alpha/2), q(1 - alpha/2))`.
    #[serde(alias = "two")]
    TwoSided,
    /// Lower half-interval from `q(alpha)` up to the posterior median.
    #[serde(alias = "lower")]
    OneSidedLower,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(try_from = "IntervalSpecShape")]
pub struct IntervalSpec {
    pub alpha: f64,
    pub sidedness: Sidedness,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IntervalSpecShape {
    alpha: f64,
    sidedness: Sidedness,
}

impl TryFrom<IntervalSpecShape> for IntervalSpec {
    type Error = Error;

    fn try_from(s: IntervalSpecShape) -> Result<Self> {
        IntervalSpec::new(s.alpha, s.sidedness)
    }
}

impl IntervalSpec {
    pub fn new(alpha: f64, sidedness: Sidedness) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::domain(format!(
                "alpha must lie in (0, 1), got {alpha}"
            )));
        }
        if sidedness == Sidedness::OneSidedLower && alpha >= 0.5 {
            return Err(Error::domain(format!(
                "one-sided lower interval needs alpha < 0.5, got {alpha}"
            )));
        }
        Ok(IntervalSpec { alpha, sidedness })
    }

    pub fn two_sided(alpha: f64) -> Result<Self> {
        IntervalSpec::new(alpha, Sidedness::TwoSided)
    }

    fn probabilities(&self) -> (f64, f64) {
        match self.sidedness {
            Sidedness::TwoSided => (0.5 * self.alpha, 1.0 - 0.5 * self.alpha),
            Sidedness::OneSidedLower => (self.alpha, 0.5),
        }
    }
}

/// Width of the posterior interval described by `spec`.
pub fn interval_width(posterior: BetaParams, spec: IntervalSpec) -> f64 {
    width_unchecked(posterior.a, posterior.b, spec)
}

#[inline]
pub(crate) fn width_unchecked(a: f64, b: f64, spec: IntervalSpec) -> f64 {
    let (lo, hi) = spec.probabilities();
    (quantile_unchecked(hi, a, b) - quantile_unchecked(lo, a, b)).max(0.0)
}

/// `W(y)` for `y = 0..=group_size`: the posterior interval width after
/// observing `y` successes out of `group_size`.
pub fn width_over_counts(prior: BetaParams, group_size: u64, spec: IntervalSpec) -> Vec<f64> {
    (0..=group_size)
        .map(|y| width_unchecked(prior.a + y as f64, prior.b + (group_size - y) as f64, spec))
        .collect()
}

/// Success counts meeting the width target at a fixed group size:
/// `y` is a member iff `y <= c1` or `y >= c2`.
///
/// `c1 = -1` encodes an empty lower branch, `c2 = group_size + 1` an empty
/// upper branch, and `c1 = group_size` a set holding every count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct CriticalSet {
    pub c1: i64,
    pub c2: i64,
    pub group_size: u64,
}

impl CriticalSet {
    pub fn empty(group_size: u64) -> Self {
        CriticalSet {
            c1: -1,
            c2: group_size as i64 + 1,
            group_size,
        }
    }

    pub fn complete(group_size: u64) -> Self {
        CriticalSet {
            c1: group_size as i64,
            c2: group_size as i64 + 1,
            group_size,
        }
    }

    /// The set whose only failing counts are `first_fail..=last_fail`.
    fn around_failures(first_fail: u64, last_fail: u64, group_size: u64) -> Self {
        CriticalSet {
            c1: first_fail as i64 - 1,
            c2: last_fail as i64 + 1,
            group_size,
        }
    }

    pub fn contains(&self, y: u64) -> bool {
        let y = y as i64;
        y <= self.c1 || y >= self.c2
    }

    pub fn is_empty(&self) -> bool {
        self.c1 < 0 && self.c2 > self.group_size as i64
    }

    pub fn is_complete(&self) -> bool {
        self.c1 >= self.group_size as i64
    }

    /// Number of member counts.
    pub fn len(&self) -> u64 {
        let n = self.group_size as i64;
        let lower = (self.c1.min(n) + 1).max(0);
        let upper = (n - self.c2 + 1).max(0);
        (lower + upper) as u64
    }
}

/// Critical set for `w_star`. Width ties count as success.
pub fn critical_set(
    prior: BetaParams,
    group_size: u64,
    w_star: f64,
    spec: IntervalSpec,
) -> CriticalSet {
    if group_size <= SCAN_LIMIT {
        critical_set_scan(prior, group_size, w_star, spec)
    } else {
        critical_set_bisect(prior, group_size, w_star, spec)
    }
}

/// Critical set from the full width vector. Any success stranded between
/// two failures would be absorbed into the failing run; unimodality of the
/// width rules that out.
pub fn critical_set_scan(
    prior: BetaParams,
    group_size: u64,
    w_star: f64,
    spec: IntervalSpec,
) -> CriticalSet {
    let widths = width_over_counts(prior, group_size, spec);
    let first = widths.iter().position(|&w| w > w_star);
    let last = widths.iter().rposition(|&w| w > w_star);
    match (first, last) {
        (Some(f), Some(l)) => {
            if f == 0 && l as u64 == group_size {
                CriticalSet::empty(group_size)
            } else {
                CriticalSet::around_failures(f as u64, l as u64, group_size)
            }
        }
        _ => CriticalSet::complete(group_size),
    }
}

/// Critical set by bisection: locate the widest count, then the two ends of
/// the failing run on either side of it. `O(log n)` width evaluations.
pub fn critical_set_bisect(
    prior: BetaParams,
    group_size: u64,
    w_star: f64,
    spec: IntervalSpec,
) -> CriticalSet {
    let mut memo: HashMap<u64, f64> = HashMap::new();
    let mut width = |y: u64| -> f64 {
        *memo.entry(y).or_insert_with(|| {
            width_unchecked(prior.a + y as f64, prior.b + (group_size - y) as f64, spec)
        })
    };

    // first y with W(y) >= W(y + 1): the peak of a unimodal sequence
    let (mut lo, mut hi) = (0u64, group_size);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if width(mid) >= width(mid + 1) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let peak = lo;
    if width(peak) <= w_star {
        return CriticalSet::complete(group_size);
    }

    // smallest failing count in [0, peak]; W is increasing there
    let (mut lo, mut hi) = (0u64, peak);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if width(mid) > w_star {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let first_fail = lo;

    // largest failing count in [peak, n]; W is decreasing there
    let (mut lo, mut hi) = (peak, group_size);
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        if width(mid) > w_star {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    let last_fail = lo;

    if first_fail == 0 && last_fail == group_size {
        CriticalSet::empty(group_size)
    } else {
        CriticalSet::around_failures(first_fail, last_fail, group_size)
    }
}

/// Where a search ended, used to start the search at the next group size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct SearchHint {
    peak: u64,
    first_fail: u64,
    last_fail: u64,
}

/// Smallest `y` in `lo..=hi` with `pred(y)` for a predicate that is false
/// then true, or `hi + 1` if there is none. Gallops outward from `guess`
/// and bisects the final bracket, so a good guess costs `O(1)` calls.
fn first_true(lo: u64, hi: u64, guess: u64, mut pred: impl FnMut(u64) -> bool) -> u64 {
    let g = guess.clamp(lo, hi);
    let (mut f, mut t);
    if pred(g) {
        t = g;
        let mut step = 1;
        loop {
            if t == lo {
                return lo;
            }
            let probe = t.saturating_sub(step).max(lo);
            if pred(probe) {
                t = probe;
                step *= 2;
            } else {
                f = probe;
                break;
            }
        }
    } else {
        f = g;
        let mut step = 1;
        loop {
            if f == hi {
                return hi + 1;
            }
            let probe = (f + step).min(hi);
            if pred(probe) {
                t = probe;
                break;
            }
            f = probe;
            step *= 2;
        }
    }
    while t - f > 1 {
        let mid = f + (t - f) / 2;
        if pred(mid) {
            t = mid;
        } else {
            f = mid;
        }
    }
    t
}

/// Same set as [`critical_set_bisect`], located by galloping searches
/// started from `hint` (the previous group size's result) or, without a
/// hint, from the count whose posterior mean is one half.
pub(crate) fn critical_set_seeded(
    prior: BetaParams,
    group_size: u64,
    w_star: f64,
    spec: IntervalSpec,
    hint: Option<SearchHint>,
) -> (CriticalSet, SearchHint) {
    let n = group_size;
    let mut memo: HashMap<u64, f64> = HashMap::new();
    let mut width = |y: u64| -> f64 {
        *memo
            .entry(y)
            .or_insert_with(|| width_unchecked(prior.a + y as f64, prior.b + (n - y) as f64, spec))
    };
    let centre = ((n as f64 + prior.b - prior.a) / 2.0)
        .clamp(0.0, n as f64)
        .round() as u64;
    let hint = hint.unwrap_or(SearchHint {
        peak: centre,
        first_fail: centre,
        last_fail: centre,
    });

    let peak = if n == 0 {
        0
    } else {
        first_true(0, n - 1, hint.peak, |y| width(y) >= width(y + 1))
    };
    if width(peak) <= w_star {
        let h = SearchHint {
            peak,
            first_fail: peak,
            last_fail: peak,
        };
        return (CriticalSet::complete(n), h);
    }
    let first_fail = first_true(0, peak, hint.first_fail, |y| width(y) > w_star);
    let last_fail = first_true(peak, n, hint.last_fail + 1, |y| width(y) <= w_star) - 1;
    let h = SearchHint {
        peak,
        first_fail,
        last_fail,
    };
    let set = if first_fail == 0 && last_fail == n {
        CriticalSet::empty(n)
    } else {
        CriticalSet::around_failures(first_fail, last_fail, n)
    };
    (set, h)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bp(a: f64, b: f64) -> BetaParams {
        BetaParams::new(a, b).unwrap()
    }

    fn two() -> IntervalSpec {
        IntervalSpec::two_sided(0.05).unwrap()
    }

    #[test]
    fn uniform_prior_width() {
        assert!((interval_width(BetaParams::uniform(), two()) - 0.95).abs() < 1e-12);
    }

    #[test]
    fn vap_posterior_width() {
        let w = interval_width(bp(76.9, 4.1), two());
        assert!((w - 0.093).abs() < 0.001, "{w}");
    }

    #[test]
    fn one_sided_width_is_median_minus_fifth_percentile() {
        let spec = IntervalSpec::new(0.05, Sidedness::OneSidedLower).unwrap();
        let w = interval_width(bp(10.0, 10.0), spec);
        assert!((w - 0.179_913_470_411_276).abs() < 1e-10, "{w}");
    }

    #[test]
    fn spec_validation() {
        assert!(IntervalSpec::two_sided(0.0).is_err());
        assert!(IntervalSpec::two_sided(1.0).is_err());
        assert!(IntervalSpec::new(0.6, Sidedness::OneSidedLower).is_err());
        let s: IntervalSpec = serde_json::from_str(r#"{"alpha":0.05,"sidedness":"two"}"#).unwrap();
        assert_eq!(s, two());
        assert!(
            serde_json::from_str::<IntervalSpec>(r#"{"alpha":1.5,"sidedness":"two"}"#).is_err()
        );
    }

    #[test]
    fn width_vector_edge_cases() {
        let prior = bp(3.0, 4.0);
        let w = width_over_counts(prior, 0, two());
        assert_eq!(w.len(), 1);
        assert!((w[0] - interval_width(prior, two())).abs() < 1e-15);

        let w = width_over_counts(BetaParams::uniform(), 20, two());
        let argmax = w
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmax, 10);
        assert!(w[0] < w[10] && w[20] < w[10]);
        assert!((w[0] - w[20]).abs() < 1e-12);
    }

    #[test]
    fn width_vector_for_vap_prior() {
        // reference widths from an independent quantile implementation
        let w = width_over_counts(bp(25.9, 2.1), 30, two());
        let expected = [
            (0, 0.2527306073),
            (10, 0.2468172751),
            (20, 0.2059601393),
            (25, 0.1653687115),
            (30, 0.0919170597),
        ];
        for (y, e) in expected {
            assert!((w[y] - e).abs() < 1e-9, "y={y}: {} vs {e}", w[y]);
        }
    }

    #[test]
    fn single_observation_cannot_reach_half_width() {
        let set = critical_set(BetaParams::uniform(), 1, 0.5, two());
        assert!(set.is_empty());
        assert_eq!(set.len(), 0);
        let w = width_over_counts(BetaParams::uniform(), 1, two());
        assert!(w.iter().all(|&x| x > 0.5));
    }

    #[test]
    fn vap_prior_at_forty() {
        let set = critical_set(bp(25.9, 2.1), 40, 0.16, two());
        assert_eq!((set.c1, set.c2), (-1, 33));
        assert_eq!(set.len(), 8);
        assert!(!set.contains(32) && set.contains(33) && set.contains(40));
    }

    #[test]
    fn generous_target_gives_complete_set() {
        for n in [0, 1, 7, 100, 600] {
            let set = critical_set(bp(2.0, 5.0), n, 0.999, two());
            assert!(set.is_complete(), "n={n}");
            assert_eq!(set.len(), n + 1);
        }
    }

    #[test]
    fn bisection_agrees_with_scan_above_limit() {
        for &(a, b, n, w) in &[
            (25.9, 2.1, 600, 0.06),
            (1.0, 1.0, 700, 0.07),
            (4.5, 0.5, 530, 0.05),
            (2.0, 9.0, 900, 0.2),
            (50.0, 50.0, 513, 0.01),
        ] {
            let p = bp(a, b);
            assert_eq!(
                critical_set_scan(p, n, w, two()),
                critical_set_bisect(p, n, w, two()),
                "a={a} b={b} n={n} w={w}"
            );
        }
    }

    #[test]
    fn seeded_chain_agrees_with_scan() {
        for &(a, b, w, sided) in &[
            (25.9, 2.1, 0.16, Sidedness::TwoSided),
            (1.0, 1.0, 0.2, Sidedness::TwoSided),
            (4.5, 0.5, 0.18, Sidedness::TwoSided),
            (0.45, 0.05, 0.18, Sidedness::TwoSided),
            (2.0, 9.0, 0.1, Sidedness::OneSidedLower),
            (40.0, 3.0, 0.3, Sidedness::TwoSided),
        ] {
            let p = bp(a, b);
            let spec = IntervalSpec::new(0.05, sided).unwrap();
            let mut hint = None;
            for n in 0..=260u64 {
                let (set, h) = critical_set_seeded(p, n, w, spec, hint);
                hint = Some(h);
                assert_eq!(
                    set,
                    critical_set_scan(p, n, w, spec),
                    "a={a} b={b} n={n} w={w}"
                );
                assert_eq!(set, critical_set_seeded(p, n, w, spec, None).0);
            }
        }
    }

    #[test]
    fn galloping_search_edges() {
        let pred = |k: u64| move |y: u64| y >= k;
        for k in 0..=11u64 {
            for g in 0..=10u64 {
                assert_eq!(first_true(0, 10, g, pred(k)), k.min(11), "k={k} g={g}");
            }
        }
        assert_eq!(first_true(5, 5, 0, |_| false), 6);
        assert_eq!(first_true(5, 5, 9, |_| true), 5);
    }

    #[test]
    fn set_encoding() {
        let e = CriticalSet::empty(5);
        assert!(e.is_empty() && !e.is_complete());
        assert_eq!(e.len(), 0);
        assert!((0..=5).all(|y| !e.contains(y)));
        let c = CriticalSet::complete(5);
        assert!(c.is_complete() && c.len() == 6);
        assert!((0..=5).all(|y| c.contains(y)));
    }
}
