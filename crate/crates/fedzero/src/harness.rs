//! Discrete-event experiment loop.
//!
//! Advances simulated time, invokes the selection strategy, executes rounds
//! against actual traces, updates the fairness ledger and the training
//! proxy, and collects metrics. When a strategy finds no feasible selection
//! the loop waits one timestep and retries. Independent experiment runs
//! (seeds, strategies) can execute in parallel; one run is driven by a
//! single control thread and is deterministic given its seed.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::fairness::{AcceptedContribution, FairnessLedger};
use crate::forecast::ResourceProviders;
use crate::metrics::{ClientTally, DomainRoundRecord, ExperimentMetrics, RoundRecord};
use crate::par::{self, Parallelism};
use crate::proxy::{ProxyConfig, ProxyModel};
use crate::runtime::{run_round, RoundOptions};
use crate::scenario::{DomainId, Scenario};
use crate::selection::{
    select_round, CandidateClient, DomainForecast, SelectOptions, SelectionInput,
};
use crate::strategies::{decide, StrategyDecision, StrategyKind, StrategyRuntime};
use crate::synth::MINUTES_PER_DAY;
use crate::trace::TraceError;

#[derive(Debug, Clone, Copy)]
pub struct ExperimentConfig {
    pub strategy: StrategyKind,
    pub days: u32,
    pub seed: u64,
    pub select: SelectOptions,
    pub proxy: ProxyConfig,
}

impl ExperimentConfig {
    pub fn new(strategy: StrategyKind, days: u32, seed: u64) -> Self {
        ExperimentConfig {
            strategy,
            days,
            seed,
            select: SelectOptions::default(),
            proxy: ProxyConfig::default(),
        }
    }
}

fn mix(seed: u64, salt: u64) -> u64 {
    let mut x = seed ^ salt.wrapping_mul(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Runs one experiment over `config.days` simulated days. Deterministic per
/// `(scenario, strategy, seed)`; wall-clock selection timings are the only
/// non-reproducible output.
pub fn run_experiment(
    scenario: &Scenario,
    providers: &ResourceProviders,
    config: &ExperimentConfig,
) -> Result<ExperimentMetrics, TraceError> {
    let params = &scenario.params;
    let total_timesteps =
        config.days as u64 * MINUTES_PER_DAY as u64 / params.timestep_minutes as u64;
    let d_max = params.max_round_duration;

    let mut metrics = ExperimentMetrics {
        strategy: config.strategy.name().to_owned(),
        seed: config.seed,
        days: config.days,
        timestep_minutes: params.timestep_minutes,
        constrained: config.strategy.is_constrained(),
        rounds: Vec::new(),
        clients: scenario
            .clients
            .iter()
            .map(|c| ClientTally {
                client_id: c.id.to_string(),
                domain_id: c.domain_id.to_string(),
                selected_rounds: 0,
                accepted_rounds: 0,
                discarded_rounds: 0,
                batches: 0,
                energy_wmin: 0.0,
                accepted_batches: 0,
            })
            .collect(),
        domain_rounds: Vec::new(),
        waited_timesteps: 0,
        selection_micros: Vec::new(),
    };
    if total_timesteps == 0 {
        return Ok(metrics);
    }
    if config.strategy.is_constrained() {
        providers.ensure_coverage(0, total_timesteps + d_max as u64)?;
    }

    let mut selection_rng = ChaCha8Rng::seed_from_u64(mix(config.seed, 1));
    let mut release_rng = ChaCha8Rng::seed_from_u64(mix(config.seed, 2));
    let mut ledger = FairnessLedger::new(scenario, config.strategy.uses_blocklist());
    let mut proxy = ProxyModel::for_scenario(scenario, config.proxy, mix(config.seed, 3));

    let mut t: u64 = 0;
    let mut cum_energy = 0.0;
    while t < total_timesteps {
        // Every selection attempt is a prospective round start: refresh
        // omega and roll release draws before looking at utilities.
        ledger.round_tick(&mut release_rng);
        let rt = StrategyRuntime {
            scenario,
            providers,
            ledger: &ledger,
        };
        let clock = Instant::now();
        let decision = decide(config.strategy, &rt, t, &config.select, &mut selection_rng)?;
        let selection_micros = clock.elapsed().as_micros() as u64;
        let (participants, wait_for, _plan) = match decision {
            StrategyDecision::Wait => {
                metrics.waited_timesteps += 1;
                t += 1;
                continue;
            }
            StrategyDecision::Run {
                participants,
                wait_for,
                plan,
            } => (participants, wait_for, plan),
        };

        let result = run_round(
            scenario,
            providers,
            &participants,
            t,
            &RoundOptions {
                max_duration: d_max,
                wait_for,
                unconstrained: !config.strategy.is_constrained(),
                carry_fractional_progress: params.carry_fractional_progress,
            },
        )?;

        let mut contributions = Vec::new();
        let mut aggregate = Vec::new();
        for (pos, &client) in result.participants.iter().enumerate() {
            let tally = &mut metrics.clients[client];
            tally.selected_rounds += 1;
            let batches = result.batches[pos];
            let energy = batches as f64 * scenario.clients[client].energy_per_batch;
            tally.batches += batches as u64;
            tally.energy_wmin += energy;
            if result.accepted[pos] {
                tally.accepted_rounds += 1;
                tally.accepted_batches += batches as u64;
                let losses = proxy.local_train(client, batches);
                let sum_squared_loss = losses.iter().map(|l| l * l).sum();
                contributions.push(AcceptedContribution {
                    client,
                    batches,
                    energy,
                    sum_squared_loss,
                });
                aggregate.push((client, batches));
            } else {
                tally.discarded_rounds += 1;
            }
        }
        proxy.aggregate(&aggregate);
        ledger.record_participation(&contributions);

        let round = metrics.rounds.len() as u32;
        for (&domain, per_t) in &result.energy_used {
            metrics.domain_rounds.push(DomainRoundRecord {
                round,
                domain_id: scenario.domains[domain].id.to_string(),
                energy_wmin: per_t.iter().sum(),
                participants: result
                    .participants
                    .iter()
                    .filter(|&&c| scenario.domain_of(c) == domain)
                    .count() as u32,
            });
        }
        let round_energy = result.total_energy();
        cum_energy += round_energy;
        let t_end = t + result.realized_duration as u64;
        metrics.rounds.push(RoundRecord {
            round,
            t_start: t,
            duration: result.realized_duration,
            selected: result.participants.len() as u32,
            accepted: result.accepted_count() as u32,
            discarded: result.discarded.len() as u32,
            batches: result.total_batches(),
            energy_wmin: round_energy,
            cum_energy_wmin: cum_energy,
            accuracy: proxy.accuracy(),
            blocklist_size: ledger.blocklist_size() as u32,
            omega: ledger.omega(),
            sim_minutes_end: t_end * params.timestep_minutes as u64,
        });
        metrics.selection_micros.push(selection_micros);
        t = t_end;
    }
    Ok(metrics)
}

/// Runs several experiments; with the `parallel` feature enabled they are
/// spread over the thread pool. Results keep the input order and match the
/// sequential execution exactly.
pub fn run_experiment_batch(
    scenario: &Scenario,
    providers: &ResourceProviders,
    configs: &[ExperimentConfig],
    parallel: Parallelism,
) -> Result<Vec<ExperimentMetrics>, TraceError> {
    let results = par::indexed_map(configs, parallel, 2, |_, config| {
        run_experiment(scenario, providers, config)
    });
    results.into_iter().collect()
}

/// Derives the imbalanced condition from a base scenario: the privileged
/// domain gets unlimited excess energy and its clients unlimited spare
/// capacity. Other domains are untouched. Returns `None` for an unknown
/// domain id.
pub fn imbalanced_scenario(
    scenario: &Scenario,
    providers: &ResourceProviders,
    privileged: &DomainId,
) -> Option<ResourceProviders> {
    let domain = scenario.domain_index(privileged)?;
    let mut out = providers.clone();
    out.make_unlimited(scenario, domain);
    Some(out)
}

/// Synthetic selection instance for profiling: `clients` spread round-robin
/// over `domains`, plateau energy that never hits zero, mild deterministic
/// load and utility variation.
pub fn synthetic_selection_input(
    clients: usize,
    domains: usize,
    horizon: u32,
    seed: u64,
) -> SelectionInput {
    assert!(clients >= 1 && domains >= 1 && horizon >= 1);
    let d = horizon as usize;
    let domain_forecasts: Vec<DomainForecast> = (0..domains)
        .map(|p| {
            let phase = mix(seed, p as u64) % 360;
            let excess_energy = (0..d)
                .map(|t| {
                    let angle = (t as u64 + phase) as f64 / 180.0 * std::f64::consts::PI;
                    500.0 + 300.0 * angle.sin() + (p % 7) as f64 * 10.0
                })
                .collect();
            DomainForecast {
                id: format!("p{p:06}").as_str().into(),
                excess_energy,
            }
        })
        .collect();
    let classes = [(11u32, 6.4f64), (38, 7.8), (74, 9.4)];
    let candidates: Vec<CandidateClient> = (0..clients)
        .map(|c| {
            let (capacity, delta) = classes[c % classes.len()];
            let wiggle = mix(seed, 1000 + c as u64);
            let min_batches = 40 + (wiggle % 5) as u32 * 10;
            let spare = (0..d)
                .map(|t| {
                    let dip = mix(wiggle, t as u64) % (capacity as u64 / 3 + 1);
                    capacity - dip as u32
                })
                .collect();
            CandidateClient {
                id: format!("c{c:06}").as_str().into(),
                domain: c % domains,
                utility: 0.5 + (wiggle % 8) as f64 * 0.25,
                energy_per_batch: delta,
                min_batches,
                max_batches: min_batches * 5,
                spare_capacity: spare,
            }
        })
        .collect();
    SelectionInput {
        domains: domain_forecasts,
        clients: candidates,
        clients_per_round: 10.min(clients as u32),
        max_duration: horizon,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ProfileSpec {
    pub clients: usize,
    pub domains: usize,
    pub horizon: u32,
    pub trials: u32,
    pub seed: u64,
    pub parallel: Parallelism,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ProfileRow {
    pub clients: usize,
    pub domains: usize,
    pub horizon: u32,
    pub trial: u32,
    pub micros: u64,
}

#[derive(Debug, Clone)]
pub struct ProfileReport {
    pub rows: Vec<ProfileRow>,
    pub median_micros: u64,
}

/// Times `select_round` on a synthetic instance of the given size.
pub fn profile_selection(spec: &ProfileSpec) -> ProfileReport {
    let input = synthetic_selection_input(spec.clients, spec.domains, spec.horizon, spec.seed);
    let opts = SelectOptions {
        parallel: spec.parallel,
        ..SelectOptions::default()
    };
    let mut rows = Vec::new();
    for trial in 0..spec.trials.max(1) {
        let clock = Instant::now();
        let outcome = select_round(&input, &opts);
        let micros = clock.elapsed().as_micros() as u64;
        std::hint::black_box(&outcome);
        rows.push(ProfileRow {
            clients: spec.clients,
            domains: spec.domains,
            horizon: spec.horizon,
            trial,
            micros,
        });
    }
    let mut sorted: Vec<u64> = rows.iter().map(|r| r.micros).collect();
    sorted.sort_unstable();
    let median_micros = sorted[sorted.len() / 2];
    ProfileReport { rows, median_micros }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::ForecastModel;
    use crate::scenario::{
        validate_scenario, ClientSpec, PowerDomain, SimulationParams, TraceRef,
    };
    use crate::trace::TraceSeries;

    fn small_scenario() -> (Scenario, ResourceProviders) {
        let mut clients = Vec::new();
        let mut domains = Vec::new();
        for d in 0..2 {
            let did = format!("d{d}");
            let ids: Vec<String> = (0..4).map(|c| format!("c{}{c}", d)).collect();
            for id in &ids {
                clients.push(ClientSpec {
                    id: id.as_str().into(),
                    domain_id: did.as_str().into(),
                    max_capacity: 10,
                    energy_per_batch: 2.0,
                    min_batches: 5,
                    max_batches: 25,
                    num_samples: 100,
                });
            }
            domains.push(PowerDomain {
                id: did.as_str().into(),
                clients: ids.iter().map(|s| s.as_str().into()).collect(),
                trace_ref: TraceRef(format!("synthetic:{did}")),
                forecast_ref: None,
            });
        }
        let params = SimulationParams {
            clients_per_round: 2,
            max_round_duration: 10,
            batch_size: 10,
            blocklist_alpha: 1.0,
            seed: 0,
            ..SimulationParams::default()
        };
        let scenario = validate_scenario(clients, domains, params).unwrap();
        let len = 3 * MINUTES_PER_DAY as usize;
        let energy = vec![
            TraceSeries::constant(0, 60.0, len),
            TraceSeries::constant(0, 40.0, len),
        ];
        let providers = ResourceProviders::new(
            &scenario,
            energy,
            vec![None; 2],
            vec![None; scenario.clients.len()],
            vec![None; scenario.clients.len()],
            ForecastModel::perfect(),
        );
        (scenario, providers)
    }

    #[test]
    fn zero_days_yield_empty_metrics() {
        let (scenario, providers) = small_scenario();
        let config = ExperimentConfig::new(StrategyKind::Random, 0, 1);
        let metrics = run_experiment(&scenario, &providers, &config).unwrap();
        assert!(metrics.rounds.is_empty());
        assert_eq!(metrics.waited_timesteps, 0);
    }

    #[test]
    fn identical_seeds_reproduce_metrics() {
        let (scenario, providers) = small_scenario();
        for strategy in [StrategyKind::Fedzero, StrategyKind::Oort13n] {
            let config = ExperimentConfig::new(strategy, 1, 7);
            let a = run_experiment(&scenario, &providers, &config).unwrap();
            let b = run_experiment(&scenario, &providers, &config).unwrap();
            assert_eq!(a.rounds, b.rounds);
            assert_eq!(a.clients, b.clients);
            assert_eq!(a.domain_rounds, b.domain_rounds);
        }
    }

    #[test]
    fn batch_matches_individual_runs() {
        let (scenario, providers) = small_scenario();
        let configs = vec![
            ExperimentConfig::new(StrategyKind::Random, 1, 1),
            ExperimentConfig::new(StrategyKind::Fedzero, 1, 2),
        ];
        let batch =
            run_experiment_batch(&scenario, &providers, &configs, Parallelism::Parallel).unwrap();
        for (config, metrics) in configs.iter().zip(&batch) {
            let single = run_experiment(&scenario, &providers, config).unwrap();
            assert_eq!(single.rounds, metrics.rounds);
        }
    }

    #[test]
    fn experiments_consume_energy_and_make_progress() {
        let (scenario, providers) = small_scenario();
        let config = ExperimentConfig::new(StrategyKind::Fedzero, 1, 3);
        let metrics = run_experiment(&scenario, &providers, &config).unwrap();
        assert!(!metrics.rounds.is_empty());
        assert!(metrics.rounds.last().unwrap().accuracy > 0.0);
        assert!(metrics.total_energy_wmin() > 0.0);
        // Cumulative energy is the running sum of round energies.
        let mut cum = 0.0;
        for r in &metrics.rounds {
            cum += r.energy_wmin;
            assert!((r.cum_energy_wmin - cum).abs() < 1e-9);
        }
    }

    #[test]
    fn imbalanced_scenario_lifts_one_domain() {
        let (scenario, providers) = small_scenario();
        let lifted = imbalanced_scenario(&scenario, &providers, &"d1".into()).unwrap();
        assert!(lifted.actual_excess_energy(1, 0).unwrap().is_infinite());
        assert_eq!(lifted.actual_excess_energy(0, 0).unwrap(), 60.0);
        assert!(imbalanced_scenario(&scenario, &providers, &"nope".into()).is_none());
    }

    #[test]
    fn profile_runs_degenerate_sizes_quickly() {
        let report = profile_selection(&ProfileSpec {
            clients: 1,
            domains: 1,
            horizon: 10,
            trials: 3,
            seed: 1,
            parallel: Parallelism::Sequential,
        });
        assert_eq!(report.rows.len(), 3);
        assert!(report.median_micros < 1_000_000, "degenerate profile too slow");
    }
}
