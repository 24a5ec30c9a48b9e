//! Reference computations that share no numerical code with the engine:
//! product-form beta-binomial masses, quantiles from `statrs`, quadrature and
//! simulation.

use assure_dx_core::assurance::{DesignSpec, Measure, PriorSet};
use assure_dx_core::beta::BetaParams;
use assure_dx_core::interval::{IntervalSpec, Sidedness};
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use statrs::distribution::{Beta, ContinuousCDF};
use statrs::function::factorial::ln_binomial;

pub fn bp(a: f64, b: f64) -> BetaParams {
    BetaParams::new(a, b).unwrap()
}

/// Beta-binomial pmf as a product of rising factorials.
pub fn bb_product(y: u64, n: u64, p: BetaParams) -> f64 {
    let mut ln = ln_binomial(n, y);
    for i in 0..y {
        ln += (p.a + i as f64).ln();
    }
    for j in 0..n - y {
        ln += (p.b + j as f64).ln();
    }
    for k in 0..n {
        ln -= (p.a + p.b + k as f64).ln();
    }
    ln.exp()
}

pub fn oracle_width(p: BetaParams, spec: IntervalSpec) -> f64 {
    let d = Beta::new(p.a, p.b).unwrap();
    let (lo, hi) = match spec.sidedness {
        Sidedness::TwoSided => (0.5 * spec.alpha, 1.0 - 0.5 * spec.alpha),
        Sidedness::OneSidedLower => (spec.alpha, 0.5),
    };
    d.inverse_cdf(hi) - d.inverse_cdf(lo)
}

/// Probability that a group of `m` meets the width target.
pub fn group_success(m: u64, prior: BetaParams, w: f64, spec: IntervalSpec) -> f64 {
    (0..=m)
        .filter(|&y| oracle_width(bp(prior.a + y as f64, prior.b + (m - y) as f64), spec) <= w)
        .map(|y| bb_product(y, m, prior))
        .sum()
}

pub fn brute_force(n_t: u64, priors: &PriorSet, design: &DesignSpec) -> f64 {
    (0..=n_t)
        .map(|m| {
            let weight = bb_product(m, n_t, priors.prev);
            let c = match design.measure {
                Measure::Sensitivity => {
                    group_success(m, priors.sens, design.w_star_sens, design.interval)
                }
                Measure::Specificity => group_success(
                    n_t - m,
                    priors.spec.unwrap(),
                    design.w_star_spec.unwrap_or(design.w_star_sens),
                    design.interval,
                ),
                Measure::Both => unreachable!(),
            };
            weight * c
        })
        .sum()
}

pub fn ks_distance(mut draws: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    draws.sort_by(f64::total_cmp);
    let n = draws.len() as f64;
    draws
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Largest KS distance of the simulated sensitivity and specificity margins
/// of a Dirichlet cell prior from the given beta margins.
pub fn dirichlet_margin_ks(
    cells: [f64; 4],
    sens: BetaParams,
    spec: BetaParams,
    draws: usize,
    rng: &mut impl Rng,
) -> f64 {
    let gammas: Vec<Gamma<f64>> = cells.iter().map(|&c| Gamma::new(c, 1.0).unwrap()).collect();
    let (mut s_draws, mut t_draws) = (Vec::with_capacity(draws), Vec::with_capacity(draws));
    for _ in 0..draws {
        let g: Vec<f64> = gammas.iter().map(|g| g.sample(rng)).collect();
        s_draws.push(g[0] / (g[0] + g[2]));
        t_draws.push(g[3] / (g[3] + g[1]));
    }
    let s_dist = Beta::new(sens.a, sens.b).unwrap();
    let t_dist = Beta::new(spec.a, spec.b).unwrap();
    ks_distance(s_draws, |x| s_dist.cdf(x)).max(ks_distance(t_draws, |x| t_dist.cdf(x)))
}

/// `∫_0^1 exp(g(p)) dp` by double-exponential quadrature, with the integrand
/// rescaled by its largest value on a coarse grid.
pub fn integrate_log(g: impl Fn(f64) -> f64) -> f64 {
    let shift = (1..1000)
        .map(|k| g(k as f64 / 1000.0))
        .fold(f64::NEG_INFINITY, f64::max);
    let f = |p: f64| {
        if p <= 0.0 || p >= 1.0 {
            0.0
        } else {
            (g(p) - shift).exp()
        }
    };
    let out = quadrature::double_exponential::integrate(f, 0.0, 1.0, 1e-14);
    out.integral * shift.exp()
}
