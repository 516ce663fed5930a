//! Scratch reconnaissance for suite calibration. Run explicitly with
//! `cargo test --test calibration -- --ignored --nocapture`.

use fedzero::config::presets;
use fedzero::harness::{imbalanced_scenario, run_experiment_batch, ExperimentConfig};
use fedzero::synth::SolarScenarioKind;
use fedzero::{ForecastModel, Parallelism, StrategyKind};

#[test]
#[ignore]
fn desk_scale_overview() {
    let start = std::time::Instant::now();
    let file = presets::desk_scale(
        SolarScenarioKind::Global,
        ForecastModel::multiplicative_noise(0.1, 7),
        42,
    );
    let (scenario, providers) = file.build(7).unwrap();
    println!("build: {:?}", start.elapsed());
    let strategies = [
        StrategyKind::Fedzero,
        StrategyKind::Random,
        StrategyKind::Random13n,
        StrategyKind::RandomFc,
        StrategyKind::Oort,
        StrategyKind::Oort13n,
        StrategyKind::OortFc,
        StrategyKind::UpperBound,
    ];
    let configs: Vec<ExperimentConfig> = strategies
        .iter()
        .map(|s| ExperimentConfig::new(*s, 7, 1))
        .collect();
    let t = std::time::Instant::now();
    let results = run_experiment_batch(&scenario, &providers, &configs, Parallelism::Parallel).unwrap();
    println!("runs: {:?}", t.elapsed());
    for m in &results {
        let s = m.summary();
        println!(
            "{:<12} rounds={:<4} waited={:<5} best_acc={:.4} final={:.4} energy={:.1}kWh dur={:.1}±{:.1}m cov={:.3} dstd={:.3} sel_med={}us",
            s.strategy,
            s.rounds,
            s.waited_timesteps,
            s.best_accuracy,
            s.final_accuracy,
            s.total_energy_kwh,
            s.mean_round_minutes,
            s.std_round_minutes,
            s.participation_cov,
            s.domain_participation_std,
            median(&m.selection_micros),
        );
    }
}

#[test]
#[ignore]
fn imbalanced_overview() {
    let file = presets::desk_scale(
        SolarScenarioKind::Global,
        ForecastModel::multiplicative_noise(0.1, 7),
        42,
    );
    let (scenario, providers) = file.build(7).unwrap();
    let providers = imbalanced_scenario(&scenario, &providers, &"berlin".into()).unwrap();
    for strategy in [StrategyKind::Fedzero, StrategyKind::Random, StrategyKind::Oort] {
        let configs: Vec<ExperimentConfig> = (1..=3)
            .map(|seed| ExperimentConfig::new(strategy, 7, seed))
            .collect();
        let results =
            run_experiment_batch(&scenario, &providers, &configs, Parallelism::Parallel).unwrap();
        for m in &results {
            let per_domain = m.domain_mean_participation();
            let global_mean: f64 =
                per_domain.iter().map(|(_, v)| *v).sum::<f64>() / per_domain.len() as f64;
            let berlin = per_domain
                .iter()
                .find(|(d, _)| d == "berlin")
                .map(|(_, v)| *v)
                .unwrap();
            println!(
                "{:<8} seed={} berlin={:.2} global={:.2} ratio={:.2} dstd={:.3}",
                m.strategy,
                m.seed,
                berlin,
                global_mean,
                berlin / global_mean,
                m.summary().domain_participation_std
            );
        }
    }
}

#[test]
#[ignore]
fn forecast_error_overview() {
    // Target accuracy from the random baseline on the noisy scenario.
    let noisy_model = ForecastModel::multiplicative_noise(0.1, 7);
    let file = presets::desk_scale(SolarScenarioKind::Global, noisy_model, 42);
    let (scenario, providers) = file.build(7).unwrap();
    let random_configs: Vec<ExperimentConfig> = (1..=3)
        .map(|seed| ExperimentConfig::new(StrategyKind::Random, 7, seed))
        .collect();
    let random_runs =
        run_experiment_batch(&scenario, &providers, &random_configs, Parallelism::Parallel)
            .unwrap();
    let target: f64 = random_runs.iter().map(|m| m.best_accuracy()).sum::<f64>()
        / random_runs.len() as f64;
    println!("target accuracy (random best): {target:.4}");

    for (label, model) in [
        ("perfect", ForecastModel::perfect()),
        ("noisy", noisy_model),
    ] {
        let file = presets::desk_scale(SolarScenarioKind::Global, model, 42);
        let (scenario, providers) = file.build(7).unwrap();
        let configs: Vec<ExperimentConfig> = (1..=3)
            .map(|seed| ExperimentConfig::new(StrategyKind::Fedzero, 7, seed))
            .collect();
        let results =
            run_experiment_batch(&scenario, &providers, &configs, Parallelism::Parallel).unwrap();
        for m in &results {
            let s = m.summary();
            println!(
                "{label:<8} seed={} rounds={} best={:.4} tta={:?}min eta={:.1}kWh energy={:.1}kWh dur={:.1}m discarded_rounds={}",
                m.seed,
                s.rounds,
                s.best_accuracy,
                m.time_to_accuracy(target),
                m.energy_to_accuracy(target).unwrap_or(f64::NAN) / 60_000.0,
                s.total_energy_kwh,
                s.mean_round_minutes,
                m.rounds.iter().map(|r| r.discarded as u64).sum::<u64>(),
            );
        }
    }
}

fn median(values: &[u64]) -> u64 {
    if values.is_empty() {
        return 0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    sorted[sorted.len() / 2]
}
