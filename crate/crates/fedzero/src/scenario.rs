//! Scenario model: clients, power domains, simulation parameters and the
//! validation that ties them together.
//!
//! A scenario is the static description of a simulated fleet. Clients are
//! characterized by their compute capacity (batches per timestep) and energy
//! efficiency (energy per batch); power domains group clients that share one
//! excess-energy budget. All energy values are watt-minutes per timestep,
//! i.e. a power reading in watts multiplied by the timestep length in
//! minutes, so per-timestep energy constraints are direct inequalities.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Opaque client identifier. Ordering is lexicographic and used as the
/// deterministic tie-break order everywhere.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClientId(pub String);

/// Opaque power-domain identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DomainId(pub String);

impl fmt::Display for ClientId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for DomainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ClientId {
    fn from(s: &str) -> Self {
        ClientId(s.to_owned())
    }
}

impl From<&str> for DomainId {
    fn from(s: &str) -> Self {
        DomainId(s.to_owned())
    }
}

/// Reference to a trace source, resolved by the resource providers.
/// Either a file path or a key for a synthetically generated series.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TraceRef(pub String);

/// Static capabilities of one client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientSpec {
    pub id: ClientId,
    pub domain_id: DomainId,
    /// Maximum computing capacity in batches per timestep.
    pub max_capacity: u32,
    /// Energy efficiency in watt-minutes per batch.
    pub energy_per_batch: f64,
    /// Minimum number of batches per round for the contribution to count.
    pub min_batches: u32,
    /// Maximum number of batches a client computes per round.
    pub max_batches: u32,
    /// Number of local training samples.
    pub num_samples: u32,
}

/// Disjoint cluster of clients sharing one excess-energy budget and one
/// forecast source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerDomain {
    pub id: DomainId,
    pub clients: BTreeSet<ClientId>,
    /// Actual excess-energy series.
    pub trace_ref: TraceRef,
    /// Forecast series for trace-pair forecasting; `None` means the forecast
    /// model is applied to the actual trace.
    #[serde(default)]
    pub forecast_ref: Option<TraceRef>,
}

fn default_timestep() -> u32 {
    1
}

fn default_over_selection() -> f64 {
    1.3
}

fn default_oort_exploration() -> f64 {
    0.1
}

/// Global simulation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationParams {
    /// Timestep length in minutes.
    #[serde(default = "default_timestep")]
    pub timestep_minutes: u32,
    /// Number of clients selected per round (`n`).
    pub clients_per_round: u32,
    /// Maximum round duration in timesteps (`d_max`).
    pub max_round_duration: u32,
    /// Samples per training batch.
    pub batch_size: u32,
    /// Blocklist release exponent; 0 disables the blocklist effect.
    pub blocklist_alpha: f64,
    /// Base RNG seed for scenario construction.
    pub seed: u64,
    /// Over-selection factor used by the `*_1_3n` baselines.
    #[serde(default = "default_over_selection")]
    pub over_selection_factor: f64,
    /// Carry fractional batch progress across timesteps at runtime.
    #[serde(default)]
    pub carry_fractional_progress: bool,
    /// Assume full capacity instead of load forecasts (ablation flag).
    #[serde(default)]
    pub assume_full_capacity_forecast: bool,
    /// Exploration fraction for the Oort baselines.
    #[serde(default = "default_oort_exploration")]
    pub oort_exploration: f64,
}

impl Default for SimulationParams {
    fn default() -> Self {
        SimulationParams {
            timestep_minutes: 1,
            clients_per_round: 10,
            max_round_duration: 60,
            batch_size: 10,
            blocklist_alpha: 1.0,
            seed: 0,
            over_selection_factor: 1.3,
            carry_fractional_progress: false,
            assume_full_capacity_forecast: false,
            oort_exploration: 0.1,
        }
    }
}

/// Per-client mutable bookkeeping, owned by the harness control thread.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClientState {
    /// Rounds in which this client's contribution was accepted.
    pub rounds_participated: u32,
    pub blocklisted: bool,
    /// Mean squared per-batch loss from the last accepted round, normalized
    /// by the client's sample count.
    pub last_mean_squared_loss: f64,
    pub cumulative_batches: u64,
    pub cumulative_energy: f64,
}

/// A validated scenario. Clients and domains are sorted by id; indices into
/// the vectors are the canonical in-memory handles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub params: SimulationParams,
    pub clients: Vec<ClientSpec>,
    pub domains: Vec<PowerDomain>,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("client {client} appears in multiple power domains ({first} and {second})")]
    DuplicateClientInMultipleDomains {
        client: ClientId,
        first: DomainId,
        second: DomainId,
    },
    #[error("client {client} references unknown power domain {domain}")]
    UnknownDomainReference { client: ClientId, domain: DomainId },
    #[error("power domain {domain} references unknown client {client}")]
    UnknownClientReference { domain: DomainId, client: ClientId },
    #[error("invariant violation for {subject}: {field}")]
    InvariantViolation { subject: String, field: &'static str },
}

impl Scenario {
    /// Index of a client id in the sorted client vector.
    pub fn client_index(&self, id: &ClientId) -> Option<usize> {
        self.clients.binary_search_by(|c| c.id.cmp(id)).ok()
    }

    /// Index of a domain id in the sorted domain vector.
    pub fn domain_index(&self, id: &DomainId) -> Option<usize> {
        self.domains.binary_search_by(|d| d.id.cmp(id)).ok()
    }

    /// Domain index of a client, by client index.
    pub fn domain_of(&self, client: usize) -> usize {
        self.domain_index(&self.clients[client].domain_id)
            .expect("validated scenario has resolvable domain ids")
    }

    /// Client indices grouped per domain, in domain order.
    pub fn clients_by_domain(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.domains.len()];
        for idx in 0..self.clients.len() {
            let d = self.domain_of(idx);
            groups[d].push(idx);
        }
        groups
    }
}

/// Validates type invariants and cross references and returns the scenario
/// with clients and domains sorted by id.
pub fn validate_scenario(
    clients: Vec<ClientSpec>,
    domains: Vec<PowerDomain>,
    params: SimulationParams,
) -> Result<Scenario, ScenarioError> {
    fn violation(subject: impl fmt::Display, field: &'static str) -> ScenarioError {
        ScenarioError::InvariantViolation {
            subject: subject.to_string(),
            field,
        }
    }

    if params.clients_per_round < 1 {
        return Err(violation("params", "clients_per_round >= 1"));
    }
    if params.max_round_duration < 1 {
        return Err(violation("params", "max_round_duration >= 1"));
    }
    if params.timestep_minutes < 1 {
        return Err(violation("params", "timestep_minutes >= 1"));
    }
    if params.batch_size < 1 {
        return Err(violation("params", "batch_size >= 1"));
    }
    if !(params.blocklist_alpha >= 0.0) {
        return Err(violation("params", "blocklist_alpha >= 0"));
    }
    if !(params.over_selection_factor >= 1.0) {
        return Err(violation("params", "over_selection_factor >= 1"));
    }
    if !(0.0..=1.0).contains(&params.oort_exploration) {
        return Err(violation("params", "oort_exploration in [0, 1]"));
    }

    let mut clients = clients;
    clients.sort_by(|a, b| a.id.cmp(&b.id));
    let mut domains = domains;
    domains.sort_by(|a, b| a.id.cmp(&b.id));

    for w in clients.windows(2) {
        if w[0].id == w[1].id {
            return Err(violation(&w[0].id, "unique client id"));
        }
    }
    for w in domains.windows(2) {
        if w[0].id == w[1].id {
            return Err(violation(&w[0].id, "unique domain id"));
        }
    }

    for client in &clients {
        if client.max_capacity < 1 {
            return Err(violation(&client.id, "max_capacity > 0"));
        }
        if !(client.energy_per_batch > 0.0) || !client.energy_per_batch.is_finite() {
            return Err(violation(&client.id, "energy_per_batch > 0"));
        }
        if client.min_batches < 1 {
            return Err(violation(&client.id, "min_batches > 0"));
        }
        if client.min_batches > client.max_batches {
            return Err(violation(&client.id, "min_batches <= max_batches"));
        }
        if client.num_samples < 1 {
            return Err(violation(&client.id, "num_samples > 0"));
        }
    }

    // Disjointness: every client in at most one domain member set.
    let mut seen: BTreeMap<&ClientId, &DomainId> = BTreeMap::new();
    for domain in &domains {
        for member in &domain.clients {
            if let Some(first) = seen.insert(member, &domain.id) {
                return Err(ScenarioError::DuplicateClientInMultipleDomains {
                    client: member.clone(),
                    first: first.clone(),
                    second: domain.id.clone(),
                });
            }
        }
    }

    let domain_ids: BTreeSet<&DomainId> = domains.iter().map(|d| &d.id).collect();
    let client_ids: BTreeSet<&ClientId> = clients.iter().map(|c| &c.id).collect();

    for client in &clients {
        if !domain_ids.contains(&client.domain_id) {
            return Err(ScenarioError::UnknownDomainReference {
                client: client.id.clone(),
                domain: client.domain_id.clone(),
            });
        }
        match seen.get(&client.id) {
            Some(domain) if **domain == client.domain_id => {}
            Some(_) => return Err(violation(&client.id, "domain membership matches domain_id")),
            None => return Err(violation(&client.id, "client listed in its power domain")),
        }
    }
    for domain in &domains {
        for member in &domain.clients {
            if !client_ids.contains(member) {
                return Err(ScenarioError::UnknownClientReference {
                    domain: domain.id.clone(),
                    client: member.clone(),
                });
            }
        }
    }

    Ok(Scenario {
        params,
        clients,
        domains,
    })
}

/// Hardware class presets. Power and throughput values follow published
/// accelerator characteristics downscaled for desk-size simulations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClientClass {
    Small,
    Mid,
    Large,
}

/// Throughput presets differ per trained model family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingWorkload {
    DenseNet121,
    EfficientNetB1,
    Lstm,
    Kwt1,
}

impl ClientClass {
    pub const ALL: [ClientClass; 3] = [ClientClass::Small, ClientClass::Mid, ClientClass::Large];

    /// Maximum power draw at full utilization, in watts.
    pub fn max_power_watts(self) -> f64 {
        match self {
            ClientClass::Small => 70.0,
            ClientClass::Mid => 300.0,
            ClientClass::Large => 700.0,
        }
    }

    /// Training throughput in samples per minute.
    pub fn samples_per_minute(self, workload: TrainingWorkload) -> f64 {
        match (self, workload) {
            (ClientClass::Small, TrainingWorkload::DenseNet121) => 110.0,
            (ClientClass::Small, TrainingWorkload::EfficientNetB1) => 118.0,
            (ClientClass::Small, TrainingWorkload::Lstm) => 276.0,
            (ClientClass::Small, TrainingWorkload::Kwt1) => 87.0,
            (ClientClass::Mid, TrainingWorkload::DenseNet121) => 384.0,
            (ClientClass::Mid, TrainingWorkload::EfficientNetB1) => 411.0,
            (ClientClass::Mid, TrainingWorkload::Lstm) => 956.0,
            (ClientClass::Mid, TrainingWorkload::Kwt1) => 303.0,
            (ClientClass::Large, TrainingWorkload::DenseNet121) => 742.0,
            (ClientClass::Large, TrainingWorkload::EfficientNetB1) => 795.0,
            (ClientClass::Large, TrainingWorkload::Lstm) => 1856.0,
            (ClientClass::Large, TrainingWorkload::Kwt1) => 586.0,
        }
    }

    /// Converts a class preset into `(max_capacity, energy_per_batch)` for
    /// the given timestep and batch size. Capacity is floored to whole
    /// batches per timestep (at least one); efficiency keeps the exact
    /// power-to-throughput ratio so full capacity draws full power.
    pub fn capabilities(
        self,
        workload: TrainingWorkload,
        timestep_minutes: u32,
        batch_size: u32,
    ) -> (u32, f64) {
        let samples = self.samples_per_minute(workload) * timestep_minutes as f64;
        let capacity = ((samples / batch_size as f64).floor() as u32).max(1);
        let energy_per_batch =
            self.max_power_watts() * batch_size as f64 / self.samples_per_minute(workload);
        (capacity, energy_per_batch)
    }
}
