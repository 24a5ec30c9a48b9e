use assure_dx_core::assurance::{
    assurance_joint, assurance_sensitivity, assurance_specificity, AssuranceEngine, DesignSpec,
    Measure, PriorSet,
};
use assure_dx_core::beta::{
    beta_binomial_log_pmf, beta_binomial_pmf_vec, beta_cdf, beta_quantile, posterior_update,
    BetaParams,
};
use assure_dx_core::comparators::{frequentist_interval, simulated_sample_size, IntervalMethod};
use assure_dx_core::interval::{
    critical_set, interval_width, width_over_counts, IntervalSpec, Sidedness,
};
use assure_dx_core::par::Execution;
use assure_dx_core::robustness::{prior_predictive_check, ConflictLevels};
use proptest::prelude::*;

fn bp(a: f64, b: f64) -> BetaParams {
    BetaParams::new(a, b).unwrap()
}

fn shape() -> impl Strategy<Value = f64> {
    (0.05f64..200.0).prop_map(|x| x)
}

fn two() -> IntervalSpec {
    IntervalSpec::two_sided(0.05).unwrap()
}

fn vap() -> (PriorSet, DesignSpec) {
    (
        PriorSet::new(bp(25.9, 2.1), bp(29.0, 98.0)),
        DesignSpec::sensitivity(0.16, two(), 0.8).unwrap(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn beta_binomial_normalizes(a in shape(), b in shape(), n in 0u64..400) {
        let p = bp(a, b);
        let total: f64 = beta_binomial_pmf_vec(n, p).iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-10, "{total}");
        let logs: f64 = (0..=n).map(|y| beta_binomial_log_pmf(y, n, p).unwrap().exp()).sum();
        prop_assert!((logs - 1.0).abs() < 1e-10, "{logs}");
    }

    #[test]
    fn quantile_inverts_cdf(a in 0.2f64..500.0, b in 0.2f64..500.0) {
        let p = bp(a, b);
        for k in 1..=99 {
            let x = k as f64 / 100.0;
            let c = beta_cdf(x, p).unwrap();
            if c <= 0.0 || c >= 1.0 {
                continue;
            }
            let back = beta_quantile(c, p).unwrap();
            // where the cdf is flat to machine precision x is not identifiable
            let density = p.ln_pdf(x).exp();
            if density * 1e-8 < 1e-14 {
                continue;
            }
            prop_assert!((back - x).abs() < 1e-8, "Beta({a},{b}) x={x} cdf={c} back={back}");
        }
    }

    #[test]
    fn posterior_update_is_associative(a in shape(), b in shape(), s1 in 0u64..500, f1 in 0u64..500, s2 in 0u64..500, f2 in 0u64..500) {
        let p = bp(a, b);
        let twice = posterior_update(posterior_update(p, s1, f1, 1.0).unwrap(), s2, f2, 1.0).unwrap();
        let once = posterior_update(p, s1 + s2, f1 + f2, 1.0).unwrap();
        prop_assert!((twice.a - once.a).abs() < 1e-9 && (twice.b - once.b).abs() < 1e-9);
    }

    #[test]
    fn failing_counts_form_one_run(a in 0.3f64..60.0, b in 0.3f64..60.0, n in 0u64..=200, w in 0.02f64..0.6) {
        let prior = bp(a, b);
        let widths = width_over_counts(prior, n, two());
        let fails: Vec<bool> = widths.iter().map(|&x| x > w).collect();
        let switches = fails.windows(2).filter(|p| p[0] != p[1]).count();
        let starts_failing = fails[0];
        let ends_failing = *fails.last().unwrap();
        // a contiguous failing run switches at most twice and never
        // starts and ends inside the failing region with a gap between
        prop_assert!(switches <= 2, "{fails:?}");
        prop_assert!(!(starts_failing && ends_failing && switches > 0), "{fails:?}");
        let set = critical_set(prior, n, w, two());
        for (y, &fail) in fails.iter().enumerate() {
            prop_assert_eq!(set.contains(y as u64), !fail, "y={}", y);
        }
    }

    #[test]
    fn one_sided_is_narrower(a in 0.5f64..300.0, b in 0.5f64..300.0, alpha in 0.01f64..0.49) {
        let p = bp(a, b);
        let lower = interval_width(p, IntervalSpec::new(alpha, Sidedness::OneSidedLower).unwrap());
        let both = interval_width(p, IntervalSpec::new(alpha, Sidedness::TwoSided).unwrap());
        prop_assert!(lower < both, "{lower} {both}");
    }

    #[test]
    fn width_shrinks_with_pseudo_counts(a in 0.5f64..50.0, b in 0.5f64..50.0) {
        let w: Vec<f64> = [1.0, 10.0, 100.0].iter().map(|k| interval_width(bp(a * k, b * k), two())).collect();
        prop_assert!(w[0] > w[1] && w[1] > w[2], "{w:?}");
    }

    #[test]
    fn conflict_tails_add_up(a in shape(), b in shape(), n in 1u64..300, frac in 0.0f64..=1.0) {
        let y = ((n as f64) * frac).round() as u64;
        let r = prior_predictive_check(y, n, bp(a, b), ConflictLevels::default()).unwrap();
        prop_assert!((r.tail_upper + r.percentile - r.pmf_observed - 1.0).abs() < 1e-10);
    }

    #[test]
    fn frequentist_intervals_are_proper(x_frac in 0.0f64..=1.0, n in 1u64..500, alpha in 0.01f64..0.2) {
        let x = ((n as f64) * x_frac).round() as u64;
        for m in IntervalMethod::ALL {
            let i = frequentist_interval(m, x, n, alpha).unwrap();
            prop_assert!(0.0 <= i.lower && i.lower <= i.upper && i.upper <= 1.0, "{m:?} {i:?}");
        }
        if 0 < x && x < n {
            let cp = frequentist_interval(IntervalMethod::ClopperPearson, x, n, alpha).unwrap();
            let p = x as f64 / n as f64;
            prop_assert!(cp.lower <= p && p <= cp.upper);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn joint_never_exceeds_marginals(
        sa in 2.0f64..60.0, sb in 1.0f64..20.0,
        ta in 2.0f64..60.0, tb in 1.0f64..20.0,
        pa in 2.0f64..40.0, pb in 2.0f64..40.0,
        w in 0.1f64..0.3, n in 1u64..250,
    ) {
        let priors = PriorSet::new(bp(sa, sb), bp(pa, pb)).with_spec(bp(ta, tb));
        let d = |m| DesignSpec::new(m, w, Some(w), two(), 0.8).unwrap();
        let s = assurance_sensitivity(n, &priors, &d(Measure::Sensitivity)).unwrap();
        let t = assurance_specificity(n, &priors, &d(Measure::Specificity)).unwrap();
        let j = assurance_joint(n, &priors, &d(Measure::Both)).unwrap();
        prop_assert!(j <= s.min(t) + 1e-12, "{j} {s} {t}");
    }
}

#[test]
fn vap_curve_is_monotone() {
    let (priors, design) = vap();
    let curve = AssuranceEngine::new(priors, design).unwrap().curve(200);
    for w in curve.points.windows(2) {
        assert!(w[1].assurance >= w[0].assurance - 1e-12, "{:?}", w);
    }
}

#[test]
fn assurance_tends_to_one() {
    let (priors, design) = vap();
    let a = AssuranceEngine::new(priors, design)
        .unwrap()
        .assurance(2000);
    assert!(a > 0.999, "{a}");
}

#[test]
fn flat_analysis_prior_lowers_assurance() {
    let (priors, design) = vap();
    let flat = priors.with_analysis_sens(BetaParams::uniform());
    for n in [50, 104, 150, 300] {
        let informed = assurance_sensitivity(n, &priors, &design).unwrap();
        let vague = assurance_sensitivity(n, &flat, &design).unwrap();
        assert!(vague < informed, "n={n} {vague} {informed}");
    }
}

#[test]
fn execution_modes_agree_bitwise() {
    let (priors, design) = vap();
    let seq = AssuranceEngine::new(priors, design)
        .unwrap()
        .with_execution(Execution::Sequential)
        .curve(400);
    let par = AssuranceEngine::new(priors, design)
        .unwrap()
        .with_execution(Execution::Parallel)
        .curve(400);
    assert_eq!(seq, par);
}

#[test]
fn simulated_sizes_are_reproducible() {
    for m in IntervalMethod::ALL {
        let a = simulated_sample_size(m, 0.85, 0.05, 0.8, 0.18, 2_000, 11, 10_000).unwrap();
        let b = simulated_sample_size(m, 0.85, 0.05, 0.8, 0.18, 2_000, 11, 10_000).unwrap();
        assert_eq!(a, b);
    }
}
