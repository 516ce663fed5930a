//! Scenario files: the on-disk JSON schema, generator expansion and trace
//! resolution.
//!
//! A scenario file carries simulation parameters, the forecast model, the
//! client list (explicit, generated, or both), the power domain list with
//! optional CSV trace paths, and optional synthetic trace blocks. Building
//! a scenario expands generators, loads or synthesizes all traces, and
//! returns the validated scenario together with its resource providers.
//! Relative trace paths resolve against the scenario file's directory.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::prelude::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forecast::{ForecastModel, ResourceProviders};
use crate::scenario::{
    validate_scenario, ClientClass, ClientId, ClientSpec, DomainId, PowerDomain, Scenario,
    ScenarioError, SimulationParams, TraceRef, TrainingWorkload,
};
use crate::synth::{
    generate_load_traces, generate_solar_traces, LoadKind, SolarScenarioKind,
};
use crate::trace::{TraceError, TraceSeries};

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("scenario json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("domain {0} has no energy trace and no solar generator is configured")]
    MissingEnergySource(DomainId),
    #[error("client generator needs at least one domain")]
    NoDomains,
}

/// Explicit client entry: the client spec plus optional load trace paths.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClientEntry {
    #[serde(flatten)]
    pub spec: ClientSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub load_trace: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub load_forecast: Option<PathBuf>,
}

/// Synthesizes a heterogeneous client fleet: hardware classes are drawn
/// uniformly, sample counts follow a Dirichlet-style skew, and batch bounds
/// correspond to whole local epochs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClientGenerator {
    pub num_clients: u32,
    pub workload: TrainingWorkload,
    pub total_samples: u64,
    pub dirichlet_alpha: f64,
    #[serde(default = "default_epochs_min")]
    pub epochs_min: u32,
    #[serde(default = "default_epochs_max")]
    pub epochs_max: u32,
    /// Cap on any single client's share of the total samples.
    #[serde(default = "default_max_share")]
    pub max_sample_share: f64,
    pub seed: u64,
}

fn default_epochs_min() -> u32 {
    1
}

fn default_epochs_max() -> u32 {
    5
}

fn default_max_share() -> f64 {
    0.05
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainEntry {
    pub id: DomainId,
    #[serde(default)]
    pub clients: BTreeSet<ClientId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_trace: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_forecast: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolarConfig {
    pub kind: SolarScenarioKind,
    /// Days of trace to generate; extended automatically to cover the run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub days: Option<u32>,
    pub peak_watts: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LoadConfig {
    pub kind: LoadKind,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub params: SimulationParams,
    #[serde(default)]
    pub forecast: ForecastModel,
    #[serde(default)]
    pub clients: Vec<ClientEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client_generator: Option<ClientGenerator>,
    pub domains: Vec<DomainEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solar: Option<SolarConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub load: Option<LoadConfig>,
    /// Directory trace paths resolve against; set when loading from disk.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl ScenarioFile {
    pub fn load(path: &Path) -> Result<Self, BuildError> {
        let text = fs::read_to_string(path).map_err(|source| BuildError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut file: ScenarioFile = serde_json::from_str(&text)?;
        file.base_dir = path.parent().map(|p| p.to_path_buf());
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<(), BuildError> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|source| BuildError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            return path.to_path_buf();
        }
        match &self.base_dir {
            Some(base) => base.join(path),
            None => path.to_path_buf(),
        }
    }

    /// Expands generators, loads or synthesizes traces, and validates.
    /// Synthetic traces cover `run_days` plus a buffer of one day so a
    /// round started near the end of the run never exhausts a trace.
    pub fn build(&self, run_days: u32) -> Result<(Scenario, ResourceProviders), BuildError> {
        if self.domains.is_empty() {
            return Err(BuildError::NoDomains);
        }
        let params = self.params.clone();
        let trace_days = run_days + 1;

        // Assemble the client fleet.
        let mut entries: Vec<ClientEntry> = self.clients.clone();
        let mut domain_members: Vec<(DomainId, BTreeSet<ClientId>)> = self
            .domains
            .iter()
            .map(|d| (d.id.clone(), d.clients.clone()))
            .collect();
        if let Some(generator) = &self.client_generator {
            let generated = generate_clients(generator, &params, &self.domains)?;
            for client in generated {
                let slot = domain_members
                    .iter_mut()
                    .find(|(id, _)| *id == client.spec.domain_id)
                    .expect("generator assigns existing domains");
                slot.1.insert(client.spec.id.clone());
                entries.push(client);
            }
        }

        let specs: Vec<ClientSpec> = entries.iter().map(|e| e.spec.clone()).collect();
        let domains: Vec<PowerDomain> = self
            .domains
            .iter()
            .zip(&domain_members)
            .map(|(entry, (_, members))| PowerDomain {
                id: entry.id.clone(),
                clients: members.clone(),
                trace_ref: match &entry.energy_trace {
                    Some(path) => TraceRef(path.to_string_lossy().into_owned()),
                    None => TraceRef(format!("synthetic:solar:{}", entry.id)),
                },
                forecast_ref: entry
                    .energy_forecast
                    .as_ref()
                    .map(|p| TraceRef(p.to_string_lossy().into_owned())),
            })
            .collect();
        let scenario = validate_scenario(specs, domains, params)?;

        // Energy traces, in the validated (sorted) domain order.
        let solar: Option<Vec<TraceSeries>> = self.solar.map(|config| {
            generate_solar_traces(
                config.kind,
                scenario.domains.len(),
                config.days.unwrap_or(0).max(trace_days),
                config.peak_watts,
                scenario.params.timestep_minutes,
                config.seed,
            )
        });
        let mut domain_energy = Vec::with_capacity(scenario.domains.len());
        let mut domain_forecast = Vec::with_capacity(scenario.domains.len());
        for (idx, domain) in scenario.domains.iter().enumerate() {
            let entry = self
                .domains
                .iter()
                .find(|e| e.id == domain.id)
                .expect("validated domains come from entries");
            let energy = match &entry.energy_trace {
                Some(path) => TraceSeries::read_csv_file(&self.resolve(path))?,
                None => match &solar {
                    Some(traces) => traces[idx].clone(),
                    None => return Err(BuildError::MissingEnergySource(domain.id.clone())),
                },
            };
            domain_energy.push(energy);
            domain_forecast.push(match &entry.energy_forecast {
                Some(path) => Some(TraceSeries::read_csv_file(&self.resolve(path))?),
                None => None,
            });
        }

        // Load traces, in the validated (sorted) client order.
        let generated_load = self.load.map(|config| {
            generate_load_traces(
                config.kind,
                scenario.clients.len(),
                trace_days,
                scenario.params.timestep_minutes,
                config.seed,
            )
        });
        let mut client_load = Vec::with_capacity(scenario.clients.len());
        let mut client_load_forecast = Vec::with_capacity(scenario.clients.len());
        for (idx, client) in scenario.clients.iter().enumerate() {
            let entry = entries
                .iter()
                .find(|e| e.spec.id == client.id)
                .expect("validated clients come from entries");
            client_load.push(match &entry.load_trace {
                Some(path) => Some(TraceSeries::read_csv_file(&self.resolve(path))?),
                None => generated_load
                    .as_ref()
                    .and_then(|traces| traces[idx].clone()),
            });
            client_load_forecast.push(match &entry.load_forecast {
                Some(path) => Some(TraceSeries::read_csv_file(&self.resolve(path))?),
                None => None,
            });
        }

        let providers = ResourceProviders::new(
            &scenario,
            domain_energy,
            domain_forecast,
            client_load,
            client_load_forecast,
            self.forecast,
        );
        Ok((scenario, providers))
    }
}

fn generate_clients(
    generator: &ClientGenerator,
    params: &SimulationParams,
    domains: &[DomainEntry],
) -> Result<Vec<ClientEntry>, BuildError> {
    if domains.is_empty() {
        return Err(BuildError::NoDomains);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(generator.seed);
    let gamma = Gamma::new(generator.dirichlet_alpha.max(1e-6), 1.0)
        .expect("gamma parameters are positive");
    let draws: Vec<f64> = (0..generator.num_clients)
        .map(|_| gamma.sample(&mut rng).max(1e-12))
        .collect();
    let total_draw: f64 = draws.iter().sum();
    let domain_ids: Vec<&DomainId> = domains.iter().map(|d| &d.id).collect();

    let batch = params.batch_size.max(1) as u64;
    let mut out = Vec::with_capacity(generator.num_clients as usize);
    for (i, draw) in draws.iter().enumerate() {
        let class = *ClientClass::ALL.as_slice().choose(&mut rng).expect("non-empty");
        let domain = *domain_ids.choose(&mut rng).expect("non-empty");
        let share = (draw / total_draw).min(generator.max_sample_share);
        let num_samples = ((generator.total_samples as f64 * share) as u64).max(batch) as u32;
        let batches_per_epoch = (num_samples as u64).div_ceil(batch) as u32;
        let (max_capacity, energy_per_batch) = class.capabilities(
            generator.workload,
            params.timestep_minutes,
            params.batch_size,
        );
        out.push(ClientEntry {
            spec: ClientSpec {
                id: ClientId(format!("c{i:04}")),
                domain_id: domain.clone(),
                max_capacity,
                energy_per_batch,
                min_batches: batches_per_epoch * generator.epochs_min.max(1),
                max_batches: batches_per_epoch * generator.epochs_max.max(generator.epochs_min),
                num_samples,
            },
            load_trace: None,
            load_forecast: None,
        });
    }
    Ok(out)
}

/// Ready-made scenario files used by the experiment suites and shipped as
/// JSON examples.
pub mod presets {
    use super::*;

    fn domains(count: usize) -> Vec<DomainEntry> {
        let names = [
            "accra", "berlin", "cordoba", "denver", "esbjerg", "fukuoka", "galway", "hanoi",
            "irkutsk", "jaipur", "kigali", "lisbon",
        ];
        (0..count)
            .map(|i| DomainEntry {
                id: names[i % names.len()].into(),
                clients: BTreeSet::new(),
                energy_trace: None,
                energy_forecast: None,
            })
            .collect()
    }

    /// Desk-scale scenario: 100 clients over 10 power domains.
    pub fn desk_scale(kind: SolarScenarioKind, forecast: ForecastModel, seed: u64) -> ScenarioFile {
        ScenarioFile {
            params: SimulationParams {
                timestep_minutes: 1,
                clients_per_round: 10,
                max_round_duration: 60,
                batch_size: 10,
                blocklist_alpha: 1.0,
                seed,
                ..SimulationParams::default()
            },
            forecast,
            clients: Vec::new(),
            client_generator: Some(ClientGenerator {
                num_clients: 100,
                workload: TrainingWorkload::DenseNet121,
                total_samples: 100_000,
                dirichlet_alpha: 0.5,
                epochs_min: 1,
                epochs_max: 5,
                max_sample_share: 0.03,
                seed: seed ^ 0xa5a5,
            }),
            domains: domains(10),
            solar: Some(SolarConfig {
                kind,
                days: None,
                peak_watts: 400.0,
                seed: seed ^ 0x501a,
            }),
            load: Some(LoadConfig {
                kind: LoadKind::Diurnal,
                seed: seed ^ 0x10ad,
            }),
            base_dir: None,
        }
    }

    /// Small scenario for quick runs: 20 clients over 3 domains.
    pub fn tiny(kind: SolarScenarioKind, forecast: ForecastModel, seed: u64) -> ScenarioFile {
        let mut file = desk_scale(kind, forecast, seed);
        file.params.clients_per_round = 4;
        file.client_generator = Some(ClientGenerator {
            num_clients: 20,
            workload: TrainingWorkload::DenseNet121,
            total_samples: 12_000,
            dirichlet_alpha: 0.5,
            epochs_min: 1,
            epochs_max: 5,
            max_sample_share: 0.1,
            seed: seed ^ 0xa5a5,
        });
        file.domains = domains(3);
        file
    }

    /// Uniform-resource scenario: co-located identical domains, idle load,
    /// identical clients. Used for isolating the blocklist effect.
    pub fn uniform_resources(seed: u64, blocklist_alpha: f64) -> ScenarioFile {
        let params = SimulationParams {
            timestep_minutes: 1,
            clients_per_round: 10,
            max_round_duration: 60,
            batch_size: 10,
            blocklist_alpha,
            seed,
            ..SimulationParams::default()
        };
        let domain_entries = domains(10);
        let mut clients = Vec::new();
        for i in 0..100usize {
            let (max_capacity, energy_per_batch) =
                ClientClass::Mid.capabilities(TrainingWorkload::DenseNet121, 1, 10);
            clients.push(ClientEntry {
                spec: ClientSpec {
                    id: ClientId(format!("c{i:04}")),
                    domain_id: domain_entries[i % domain_entries.len()].id.clone(),
                    max_capacity,
                    energy_per_batch,
                    min_batches: 60,
                    max_batches: 300,
                    num_samples: 600,
                },
                load_trace: None,
                load_forecast: None,
            });
        }
        let mut domain_entries = domain_entries;
        for entry in &mut domain_entries {
            entry.clients = clients
                .iter()
                .filter(|c| c.spec.domain_id == entry.id)
                .map(|c| c.spec.id.clone())
                .collect();
        }
        ScenarioFile {
            params,
            forecast: ForecastModel::perfect(),
            clients,
            client_generator: None,
            domains: domain_entries,
            solar: Some(SolarConfig {
                kind: SolarScenarioKind::CoLocated,
                days: None,
                peak_watts: 800.0,
                seed: seed ^ 0x501a,
            }),
            load: Some(LoadConfig {
                kind: LoadKind::Idle,
                seed,
            }),
            base_dir: None,
        }
    }
}
