//! Compares the rayon data-parallel paths against the sequential fallback:
//! the per-domain solver fan-out inside one selection and a batch of
//! independent experiment runs.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use fedzero::config::presets;
use fedzero::harness::{run_experiment_batch, synthetic_selection_input, ExperimentConfig};
use fedzero::selection::{select_round, SelectOptions};
use fedzero::synth::SolarScenarioKind;
use fedzero::{ForecastModel, Parallelism, StrategyKind};

fn bench_selection(c: &mut Criterion) {
    let mut group = c.benchmark_group("select_round");
    for &clients in &[500usize, 2_000] {
        let input = synthetic_selection_input(clients, clients / 10, 60, 7);
        for (label, mode) in [
            ("sequential", Parallelism::Sequential),
            ("parallel", Parallelism::Parallel),
        ] {
            group.bench_with_input(
                BenchmarkId::new(label, clients),
                &input,
                |b, input| {
                    let opts = SelectOptions {
                        parallel: mode,
                        ..SelectOptions::default()
                    };
                    b.iter(|| black_box(select_round(input, &opts)))
                },
            );
        }
    }
    group.finish();
}

fn bench_experiment_batch(c: &mut Criterion) {
    let file = presets::tiny(SolarScenarioKind::Global, ForecastModel::perfect(), 3);
    let (scenario, providers) = file.build(1).expect("preset builds");
    let configs: Vec<ExperimentConfig> = (0..4)
        .map(|seed| ExperimentConfig::new(StrategyKind::Random, 1, seed))
        .collect();
    let mut group = c.benchmark_group("experiment_batch");
    group.sample_size(10);
    for (label, mode) in [
        ("sequential", Parallelism::Sequential),
        ("parallel", Parallelism::Parallel),
    ] {
        group.bench_function(label, |b| {
            b.iter(|| {
                black_box(run_experiment_batch(&scenario, &providers, &configs, mode).unwrap())
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_selection, bench_experiment_batch);
criterion_main!(benches);
