use std::hint::black_box;

use assure_dx_core::assurance::{AssuranceEngine, DesignSpec, PriorSet};
use assure_dx_core::beta::BetaParams;
use assure_dx_core::comparators::{scenario_grid, GridSpec};
use assure_dx_core::interval::IntervalSpec;
use assure_dx_core::par::{Execution, Monitor};
use assure_dx_core::robustness::{sensitivity_scan, PriorSlot, ScanSpec};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn vap() -> (PriorSet, DesignSpec) {
    let priors = PriorSet::new(
        BetaParams::new(25.9, 2.1).unwrap(),
        BetaParams::new(29.0, 98.0).unwrap(),
    );
    let design =
        DesignSpec::sensitivity(0.16, IntervalSpec::two_sided(0.05).unwrap(), 0.8).unwrap();
    (priors, design)
}

fn curve(c: &mut Criterion) {
    let (priors, design) = vap();
    let mut group = c.benchmark_group("vap_curve_2000");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                let engine = AssuranceEngine::new(priors, design)
                    .unwrap()
                    .with_execution(exec);
                black_box(engine.curve(2000))
            })
        });
    }
    group.finish();
}

fn scan(c: &mut Criterion) {
    let (priors, design) = vap();
    let spec = ScanSpec::new(PriorSlot::Sens, 0.00354);
    let mut group = c.benchmark_group("sensitivity_scan_64");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(sensitivity_scan(&priors, &design, &spec, exec).unwrap()))
        });
    }
    group.finish();
}

fn grid(c: &mut Criterion) {
    let spec = GridSpec {
        sens: vec![0.7, 0.9],
        prev: vec![0.3, 0.7],
        reps: 1_000,
        ..GridSpec::default()
    };
    let mut group = c.benchmark_group("scenario_grid_2x2");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(scenario_grid(&spec, exec, Monitor::default()).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, curve, scan, grid);
criterion_main!(benches);
