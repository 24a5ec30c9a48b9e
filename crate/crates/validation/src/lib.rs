//! Acceptance criteria, each computed from scratch and judged against a
//! fixed tolerance.

use std::time::{Duration, Instant};

use assure_dx_core::assurance::{
    monte_carlo_assurance, AssuranceEngine, DesignSpec, Measure, PriorSet,
};
use assure_dx_core::beta::{
    beta_binomial_pmf_vec, beta_cdf, beta_quantile, dirichlet_margins, DirichletParams,
};
use assure_dx_core::comparators::{
    scenario_grid, width_study, ComparisonScenario, GridSpec, SizingMethod, WidthStudySpec,
    WIDTH_METHODS,
};
use assure_dx_core::config::DEFAULT_EPSILON;
use assure_dx_core::error::Error;
use assure_dx_core::interval::{critical_set, width_over_counts, IntervalSpec, Sidedness};
use assure_dx_core::par::{Execution, Monitor};
use assure_dx_core::robustness::{
    prior_predictive_check, ConflictLevels, PriorSlot, SensitivityReport,
};
use assure_dx_core::run::{run_conflict, run_sensitivity, run_vap_case_study, vap_config};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use assure_dx_reference::{bp, brute_force, dirichlet_margin_ks};

pub type Criterion = (&'static str, fn() -> Outcome);

pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol + 1e-12
}

fn vap_engine(exec: Execution) -> AssuranceEngine {
    let priors = PriorSet::new(bp(25.9, 2.1), bp(29.0, 98.0));
    let design =
        DesignSpec::sensitivity(0.16, IntervalSpec::two_sided(0.05).unwrap(), 0.8).unwrap();
    AssuranceEngine::new(priors, design)
        .unwrap()
        .with_execution(exec)
}

fn vap_sample_size() -> Outcome {
    let start = Instant::now();
    let engine = vap_engine(Execution::Sequential);
    let n_star = engine.min_sample_size(10_000).unwrap().n_star;
    let a150 = engine.assurance(150);
    let elapsed = start.elapsed();
    let pass = n_star == 106 && within(a150, 0.88, 0.005) && elapsed < Duration::from_secs(10);
    outcome(
        pass,
        format!(
            "n* = {n_star} (target 106), A(150) = {a150:.5} (0.88 ± 0.005), {:.2} s single-threaded (< 10 s)",
            elapsed.as_secs_f64()
        ),
    )
}

fn posterior_intervals() -> Outcome {
    let (lo, hi) = bp(76.9, 4.1).equal_tailed_interval(0.05).unwrap();
    let study = run_vap_case_study(&vap_config(), Execution::default()).unwrap();
    let flat = study.flat_prevalence_posterior;
    let informative = study
        .conflict
        .posteriors
        .iter()
        .find(|p| p.parameter == PriorSlot::Prev)
        .unwrap()
        .summary;
    let pass = within(lo, 0.893, 0.001)
        && within(hi, 0.986, 0.001)
        && within(flat.mean, 0.355, 0.002)
        && within(flat.lower, 0.281, 0.002)
        && within(flat.upper, 0.433, 0.002)
        && within(informative.mean, 0.296, 0.002);
    outcome(
        pass,
        format!(
            "Beta(76.9, 4.1) 95% ({lo:.4}, {hi:.4}); flat prevalence mean {:.4} ({:.4}, {:.4}); informative mean {:.4}",
            flat.mean, flat.lower, flat.upper, informative.mean
        ),
    )
}

fn scan_with(angles: usize) -> Vec<SensitivityReport> {
    let mut cfg = vap_config();
    cfg.study.sensitivity.epsilon = DEFAULT_EPSILON;
    cfg.study.sensitivity.n_angles = angles;
    run_sensitivity(&cfg, Execution::default()).unwrap().reports
}

fn sensitivity_scan_ranges() -> Outcome {
    let coarse = scan_with(64);
    let fine = scan_with(128);
    let find = |reports: &[SensitivityReport], slot| {
        reports.iter().find(|r| r.vary == slot).cloned().unwrap()
    };
    let sens = find(&coarse, PriorSlot::Sens);
    let prev = find(&coarse, PriorSlot::Prev);
    let ranges = within(sens.a_min, 0.73, 0.02)
        && within(sens.a_max, 0.86, 0.02)
        && sens.n_min.abs_diff(82) <= 6
        && sens.n_max.abs_diff(130) <= 6
        && within(prev.a_min, 0.80, 0.01)
        && within(prev.a_max, 0.81, 0.01)
        && prev.n_min.abs_diff(104) <= 2
        && prev.n_max.abs_diff(108) <= 2;
    let drift: Vec<String> = coarse
        .iter()
        .zip(&fine)
        .map(|(c, f)| {
            format!(
                "{} n* [{}, {}] -> [{}, {}]",
                c.vary.as_str(),
                c.n_min,
                c.n_max,
                f.n_min,
                f.n_max
            )
        })
        .collect();
    let stable = coarse
        .iter()
        .zip(&fine)
        .all(|(c, f)| c.n_min.abs_diff(f.n_min) < 2 && c.n_max.abs_diff(f.n_max) < 2);
    outcome(
        ranges && stable,
        format!(
            "64 angles: sens A [{:.3}, {:.3}] n* [{}, {}], prev A [{:.3}, {:.3}] n* [{}, {}] (ranges {}); 64 -> 128 angles: {} (refinement {})",
            sens.a_min,
            sens.a_max,
            sens.n_min,
            sens.n_max,
            prev.a_min,
            prev.a_max,
            prev.n_min,
            prev.n_max,
            if ranges { "ok" } else { "off" },
            drift.join(", "),
            if stable { "stable" } else { "unstable" }
        ),
    )
}

fn conflict_percentiles() -> Outcome {
    let levels = ConflictLevels::default();
    let prev = prior_predictive_check(53, 150, bp(29.0, 98.0), levels)
        .unwrap()
        .percentile;
    let sens = prior_predictive_check(51, 53, bp(25.9, 2.1), levels)
        .unwrap()
        .percentile;
    let from_config = run_conflict(&vap_config()).unwrap();
    let consistent = from_config.checks[0].report.percentile == prev
        && from_config.checks[1].report.percentile == sens;
    let pass = (0.985..=0.995).contains(&prev) && (0.73..=0.79).contains(&sens) && consistent;
    outcome(
        pass,
        format!("Pr(Y <= 53 | 150) = {prev:.5} in [0.985, 0.995]; Pr(Y <= 51 | 53) = {sens:.5} in [0.73, 0.79]"),
    )
}

fn low_prevalence_sizes() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for (prev, target) in [(0.1, 681u64), (0.05, 1643), (0.01, 2770)] {
        let scenario = ComparisonScenario {
            sens_true: 0.9,
            prev_true: prev,
            av_size: 50,
            alpha: 0.05,
            beta: 0.8,
            w_star: 0.18,
            seed: 0,
        };
        match scenario.assurance_size(false, 10_000, Execution::default()) {
            Ok(n) => {
                let rel = (n as f64 - target as f64).abs() / target as f64;
                pass &= rel <= 0.02;
                parts.push(format!(
                    "rho {prev}: {n} (target {target}, {:+.1}%)",
                    100.0 * (n as f64 / target as f64 - 1.0)
                ));
            }
            Err(Error::NotFound { cap, .. }) => {
                pass = false;
                parts.push(format!(
                    "rho {prev}: not reached by {cap} (target {target})"
                ));
            }
            Err(e) => panic!("{e}"),
        }
    }
    outcome(pass, parts.join("; "))
}

fn oracle_equivalence() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(706);
    let mut worst = 0.0f64;
    let mut cases = vec![(
        PriorSet::new(bp(25.9, 2.1), bp(29.0, 98.0)),
        DesignSpec::sensitivity(0.16, IntervalSpec::two_sided(0.05).unwrap(), 0.8).unwrap(),
    )];
    for _ in 0..5 {
        let priors = PriorSet::new(
            bp(r.random_range(1.0..40.0), r.random_range(1.0..12.0)),
            bp(r.random_range(1.0..30.0), r.random_range(1.0..30.0)),
        )
        .with_spec(bp(r.random_range(1.0..40.0), r.random_range(1.0..12.0)));
        let sided = if r.random_bool(0.5) {
            Sidedness::TwoSided
        } else {
            Sidedness::OneSidedLower
        };
        let interval = IntervalSpec::new(r.random_range(0.02..0.2), sided).unwrap();
        let measure = if r.random_bool(0.5) {
            Measure::Sensitivity
        } else {
            Measure::Specificity
        };
        let w = r.random_range(0.12..0.4);
        cases.push((
            priors,
            DesignSpec::new(measure, w, Some(w), interval, 0.8).unwrap(),
        ));
    }
    for (priors, design) in &cases {
        let engine = AssuranceEngine::new(*priors, *design).unwrap();
        for n_t in 0..=60 {
            worst = worst.max((engine.assurance(n_t) - brute_force(n_t, priors, design)).abs());
        }
    }
    let mut worst_z = 0.0f64;
    for case in 0..20u64 {
        let priors = PriorSet::new(
            bp(r.random_range(2.0..40.0), r.random_range(1.0..10.0)),
            bp(r.random_range(2.0..30.0), r.random_range(2.0..30.0)),
        );
        let design = DesignSpec::sensitivity(
            r.random_range(0.12..0.3),
            IntervalSpec::two_sided(0.05).unwrap(),
            0.8,
        )
        .unwrap();
        let n_t = r.random_range(20..300);
        let exact = AssuranceEngine::new(priors, design).unwrap().assurance(n_t);
        let mc = monte_carlo_assurance(
            n_t,
            &priors,
            &design,
            100_000,
            7060 + case,
            Execution::default(),
        )
        .unwrap();
        let z = if mc.std_error > 0.0 {
            (mc.estimate - exact).abs() / mc.std_error
        } else if (mc.estimate - exact).abs() < 1e-4 {
            0.0
        } else {
            f64::INFINITY
        };
        worst_z = worst_z.max(z);
    }
    outcome(
        worst < 1e-10 && worst_z < 3.0,
        format!(
            "enumeration over nT <= 60 on {} designs: max |diff| {worst:.1e} (< 1e-10); simulation on 20 designs: max {worst_z:.2} SE (< 3)",
            cases.len()
        ),
    )
}

fn comparison_grid_structure() -> Outcome {
    let spec = GridSpec::default();
    let grid = scenario_grid(&spec, Execution::default(), Monitor::default()).unwrap();
    let (mut cp_ok, mut bam_ok, mut high_ok) = (true, true, true);
    let mut notes = Vec::new();
    for &l in &spec.sens {
        for &p in &spec.prev {
            let size = |m, av| grid.size(l, p, m, av);
            let cp = size(SizingMethod::ClopperPearson, None);
            let ac = size(SizingMethod::AgrestiCoull, None);
            let wald = size(SizingMethod::Wald, None);
            let cap = |n: Option<u64>| n.unwrap_or(u64::MAX);
            if cap(cp) < cap(ac) || cap(cp) < cap(wald) {
                cp_ok = false;
                notes.push(format!(
                    "CP {cp:?} AC {ac:?} Wald {wald:?} at ({l:.2}, {p:.2})"
                ));
            }
            let bam: Vec<u64> = spec
                .av_sizes
                .iter()
                .map(|&n0| cap(size(SizingMethod::Assurance, Some(n0))))
                .collect();
            if bam.windows(2).any(|w| w[1] > w[0]) {
                bam_ok = false;
                notes.push(format!("BAM {bam:?} at ({l:.2}, {p:.2})"));
            }
            if p >= 0.5 {
                let freq = [cp, ac, wald].iter().map(|n| cap(*n)).min().unwrap();
                let largest_bam = bam.iter().copied().max().unwrap();
                if freq <= largest_bam {
                    high_ok = false;
                    notes.push(format!(
                        "frequentist {freq} vs BAM {largest_bam} at ({l:.2}, {p:.2})"
                    ));
                }
            }
        }
    }
    let pass = cp_ok && bam_ok && high_ok;
    let mut detail = format!(
        "{}x{} grid: CP >= AC, Wald {}; BAM non-increasing in nT0 {}; frequentist > BAM at rho >= 0.5 {}",
        spec.sens.len(),
        spec.prev.len(),
        cp_ok,
        bam_ok,
        high_ok
    );
    if !notes.is_empty() {
        detail.push_str(&format!(" [{}]", notes.join("; ")));
    }
    outcome(pass, detail)
}

fn width_study_quantiles() -> Outcome {
    let start = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for w_star in [0.14, 0.18, 0.22] {
        for beta in [0.5, 0.8] {
            let spec = WidthStudySpec {
                beta,
                w_star,
                reps: 100,
                ..WidthStudySpec::default()
            };
            let study = width_study(&spec, Execution::default(), Monitor::default()).unwrap();
            for method in WIDTH_METHODS {
                let s = study.summary(method).unwrap();
                let ok = if beta == 0.5 {
                    within(s.median, w_star, 0.03)
                } else {
                    w_star >= s.p70
                };
                if !ok {
                    pass = false;
                    let stat = if beta == 0.5 {
                        ("median", s.median)
                    } else {
                        ("p70", s.p70)
                    };
                    parts.push(format!(
                        "w* {w_star} beta {beta} {method:?} {} {:.4}",
                        stat.0, stat.1
                    ));
                }
            }
        }
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(300);
    let misses = if parts.is_empty() {
        "none".to_string()
    } else {
        parts.join("; ")
    };
    outcome(
        pass,
        format!(
            "6 studies x 100 reps in {:.1} s (< 300 s); misses: {misses}",
            elapsed.as_secs_f64()
        ),
    )
}

fn property_suites() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(709);
    let mut failures = Vec::new();
    let two = IntervalSpec::two_sided(0.05).unwrap();
    for _ in 0..200 {
        let p = bp(r.random_range(0.05..200.0), r.random_range(0.05..200.0));
        let n = r.random_range(0..400);
        let total: f64 = beta_binomial_pmf_vec(n, p).iter().sum();
        if (total - 1.0).abs() >= 1e-10 {
            failures.push(format!("pmf sum {total} for {p:?} n={n}"));
        }
    }
    for _ in 0..100 {
        let p = bp(r.random_range(0.2..500.0), r.random_range(0.2..500.0));
        for k in 1..=99 {
            let x = k as f64 / 100.0;
            let c = beta_cdf(x, p).unwrap();
            if c <= 0.0 || c >= 1.0 || p.ln_pdf(x).exp() < 1e-6 {
                continue;
            }
            let back = beta_quantile(c, p).unwrap();
            if (back - x).abs() >= 1e-8 {
                failures.push(format!("quantile(cdf({x})) = {back} for {p:?}"));
            }
        }
    }
    for _ in 0..200 {
        let prior = bp(r.random_range(0.3..60.0), r.random_range(0.3..60.0));
        let n = r.random_range(0..=200);
        let w = r.random_range(0.02..0.6);
        let fails: Vec<bool> = width_over_counts(prior, n, two)
            .iter()
            .map(|&x| x > w)
            .collect();
        let set = critical_set(prior, n, w, two);
        let runs = fails.windows(2).filter(|p| p[0] != p[1]).count();
        let split = fails[0] && fails[fails.len() - 1] && runs > 0;
        let agrees = fails
            .iter()
            .enumerate()
            .all(|(y, &f)| set.contains(y as u64) != f);
        if runs > 2 || split || !agrees {
            failures.push(format!("critical set for {prior:?} n={n} w={w}"));
        }
    }
    for _ in 0..5 {
        let cells: [f64; 4] = std::array::from_fn(|_| r.random_range(0.5..30.0));
        let (sens, spec) = dirichlet_margins(
            DirichletParams::new(cells[0], cells[1], cells[2], cells[3]).unwrap(),
        );
        let ks = dirichlet_margin_ks(cells, sens, spec, 100_000, &mut r);
        if ks >= 0.02 {
            failures.push(format!("Dirichlet margins KS {ks} for {cells:?}"));
        }
    }
    let curve = vap_engine(Execution::default()).curve(200);
    if curve
        .points
        .windows(2)
        .any(|w| w[1].assurance < w[0].assurance - 1e-12)
    {
        failures.push("VAP curve decreases".into());
    }
    let detail = if failures.is_empty() {
        "pmf normalization, quantile inversion, critical-set unimodality, Dirichlet margins, monotone curve".to_string()
    } else {
        failures.join("; ")
    };
    outcome(failures.is_empty(), detail)
}

pub fn criteria() -> [Criterion; 9] {
    [
        ("vap-sample-size", vap_sample_size),
        ("posterior-intervals", posterior_intervals),
        ("sensitivity-scan-ranges", sensitivity_scan_ranges),
        ("conflict-percentiles", conflict_percentiles),
        ("low-prevalence-sizes", low_prevalence_sizes),
        ("oracle-equivalence", oracle_equivalence),
        ("comparison-grid-structure", comparison_grid_structure),
        ("width-study-quantiles", width_study_quantiles),
        ("property-suites", property_suites),
    ]
}
