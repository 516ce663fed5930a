//! Forecast models and resource providers.
//!
//! Providers hand out two views of the world: the forecast view used by
//! client selection and the actual view consumed by the round runtime.
//! Forecast noise is a pure function of `(model seed, entity, timestep)`,
//! so repeated queries for the same timestep agree and identical seeds
//! reproduce identical sequences.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::scenario::Scenario;
use crate::trace::{TraceError, TraceSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ForecastKind {
    /// Forecast equals the actual trace.
    #[default]
    Perfect,
    /// Forecasts come from a paired forecast series where available,
    /// falling back to the actual trace.
    TracePair,
    /// Multiplicative log-normal noise applied to the actual trace.
    MultiplicativeNoise,
}

/// Forecast error model. With `multiplicative_noise`, each forecast value is
/// `actual * exp(bias + sigma * z - sigma^2 / 2)` for standard normal `z`,
/// which keeps the mean multiplier at `exp(bias)` (1 for zero bias). The
/// error is held constant over `correlation_minutes` blocks: forecast
/// misses persist over time the way vendor forecasts miss whole weather
/// situations, instead of averaging out across a planning window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastModel {
    #[serde(default)]
    pub kind: ForecastKind,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub bias: f64,
    #[serde(default = "default_correlation_minutes")]
    pub correlation_minutes: u32,
    #[serde(default)]
    pub seed: u64,
}

fn default_correlation_minutes() -> u32 {
    120
}

impl Default for ForecastModel {
    fn default() -> Self {
        ForecastModel {
            kind: ForecastKind::Perfect,
            noise_sigma: 0.0,
            bias: 0.0,
            correlation_minutes: default_correlation_minutes(),
            seed: 0,
        }
    }
}

impl ForecastModel {
    pub fn perfect() -> Self {
        Self::default()
    }

    pub fn multiplicative_noise(noise_sigma: f64, seed: u64) -> Self {
        ForecastModel {
            kind: ForecastKind::MultiplicativeNoise,
            noise_sigma,
            bias: 0.0,
            correlation_minutes: default_correlation_minutes(),
            seed,
        }
    }

    /// Noise multiplier for one `(entity, timestep)` pair. A pure function
    /// of the model seed, the entity and the correlation block the
    /// timestep falls into.
    fn multiplier(&self, entity_salt: u64, timestep: u64, timestep_minutes: u32) -> f64 {
        let block_len = (self.correlation_minutes.max(1) as u64)
            .div_ceil(timestep_minutes.max(1) as u64)
            .max(1);
        let block = timestep / block_len;
        let mixed = splitmix64(
            splitmix64(self.seed ^ entity_salt).wrapping_add(block.wrapping_mul(0x9e3779b97f4a7c15)),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(mixed);
        let z: f64 = StandardNormal.sample(&mut rng);
        (self.bias + self.noise_sigma * z - self.noise_sigma * self.noise_sigma / 2.0).exp()
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// FNV-1a. Stable across runs and toolchains, unlike the std hasher.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in bytes {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Read-only source of actual and forecasted excess energy and spare
/// capacity, aligned to a validated scenario's client and domain indices.
#[derive(Debug, Clone)]
pub struct ResourceProviders {
    domain_energy: Vec<TraceSeries>,
    domain_energy_forecast: Vec<Option<TraceSeries>>,
    /// Utilization in [0, 1] per client; `None` means idle.
    client_utilization: Vec<Option<TraceSeries>>,
    client_utilization_forecast: Vec<Option<TraceSeries>>,
    client_capacity: Vec<u32>,
    domain_salt: Vec<u64>,
    client_salt: Vec<u64>,
    unlimited_energy: Vec<bool>,
    unlimited_capacity: Vec<bool>,
    model: ForecastModel,
    assume_full_capacity_forecast: bool,
    timestep_minutes: u32,
}

impl ResourceProviders {
    pub fn new(
        scenario: &Scenario,
        domain_energy: Vec<TraceSeries>,
        domain_energy_forecast: Vec<Option<TraceSeries>>,
        client_utilization: Vec<Option<TraceSeries>>,
        client_utilization_forecast: Vec<Option<TraceSeries>>,
        model: ForecastModel,
    ) -> Self {
        assert_eq!(domain_energy.len(), scenario.domains.len());
        assert_eq!(domain_energy_forecast.len(), scenario.domains.len());
        assert_eq!(client_utilization.len(), scenario.clients.len());
        assert_eq!(client_utilization_forecast.len(), scenario.clients.len());
        ResourceProviders {
            domain_energy,
            domain_energy_forecast,
            client_utilization,
            client_utilization_forecast,
            client_capacity: scenario.clients.iter().map(|c| c.max_capacity).collect(),
            domain_salt: scenario
                .domains
                .iter()
                .map(|d| fnv1a(d.id.0.as_bytes()))
                .collect(),
            client_salt: scenario
                .clients
                .iter()
                .map(|c| fnv1a(c.id.0.as_bytes()))
                .collect(),
            unlimited_energy: vec![false; scenario.domains.len()],
            unlimited_capacity: vec![false; scenario.clients.len()],
            model,
            assume_full_capacity_forecast: scenario.params.assume_full_capacity_forecast,
            timestep_minutes: scenario.params.timestep_minutes,
        }
    }

    /// Lifts all energy and capacity limits of one domain and its clients.
    pub fn make_unlimited(&mut self, scenario: &Scenario, domain: usize) {
        self.unlimited_energy[domain] = true;
        for (idx, client) in scenario.clients.iter().enumerate() {
            if scenario.domains[domain].clients.contains(&client.id) {
                self.unlimited_capacity[idx] = true;
            }
        }
    }

    pub fn forecast_model(&self) -> &ForecastModel {
        &self.model
    }

    /// Ground-truth excess energy of one domain at one timestep, in
    /// watt-minutes. Used exclusively by the round runtime.
    pub fn actual_excess_energy(&self, domain: usize, t: u64) -> Result<f64, TraceError> {
        if self.unlimited_energy[domain] {
            return Ok(f64::INFINITY);
        }
        self.domain_energy[domain].value_at(t)
    }

    /// Ground-truth spare capacity of one client at one timestep, in batches.
    pub fn actual_spare_capacity(&self, client: usize, t: u64) -> Result<u32, TraceError> {
        let capacity = self.client_capacity[client];
        if self.unlimited_capacity[client] {
            return Ok(capacity);
        }
        match &self.client_utilization[client] {
            None => Ok(capacity),
            Some(series) => Ok(spare_from_utilization(capacity, series.value_at(t)?)),
        }
    }

    /// Forecasted excess energy for `[t0, t0 + horizon)`.
    pub fn excess_energy_forecast(
        &self,
        domain: usize,
        t0: u64,
        horizon: u32,
    ) -> Result<Vec<f64>, TraceError> {
        assert!(horizon >= 1);
        let mut out = Vec::with_capacity(horizon as usize);
        for t in t0..t0 + horizon as u64 {
            out.push(self.energy_forecast_at(domain, t)?);
        }
        Ok(out)
    }

    fn energy_forecast_at(&self, domain: usize, t: u64) -> Result<f64, TraceError> {
        if self.unlimited_energy[domain] {
            return Ok(f64::INFINITY);
        }
        match self.model.kind {
            ForecastKind::Perfect => self.domain_energy[domain].value_at(t),
            ForecastKind::TracePair => match &self.domain_energy_forecast[domain] {
                Some(series) => series.value_at(t),
                None => self.domain_energy[domain].value_at(t),
            },
            ForecastKind::MultiplicativeNoise => {
                let actual = self.domain_energy[domain].value_at(t)?;
                Ok((actual * self.model.multiplier(self.domain_salt[domain], t, self.timestep_minutes)).max(0.0))
            }
        }
    }

    /// Forecasted spare capacity for `[t0, t0 + horizon)`, clamped to
    /// `[0, max_capacity]`.
    pub fn spare_capacity_forecast(
        &self,
        client: usize,
        t0: u64,
        horizon: u32,
    ) -> Result<Vec<u32>, TraceError> {
        assert!(horizon >= 1);
        let mut out = Vec::with_capacity(horizon as usize);
        for t in t0..t0 + horizon as u64 {
            out.push(self.spare_forecast_at(client, t)?);
        }
        Ok(out)
    }

    fn spare_forecast_at(&self, client: usize, t: u64) -> Result<u32, TraceError> {
        let capacity = self.client_capacity[client];
        if self.assume_full_capacity_forecast || self.unlimited_capacity[client] {
            return Ok(capacity);
        }
        match self.model.kind {
            ForecastKind::Perfect => self.actual_spare_capacity(client, t),
            ForecastKind::TracePair => match &self.client_utilization_forecast[client] {
                Some(series) => Ok(spare_from_utilization(capacity, series.value_at(t)?)),
                None => self.actual_spare_capacity(client, t),
            },
            ForecastKind::MultiplicativeNoise => {
                // The predicted quantity is the load, not the spare: spare
                // capacity inherits the utilization error amplified by the
                // load level.
                match &self.client_utilization[client] {
                    None => Ok(capacity),
                    Some(series) => {
                        let actual_util = series.value_at(t)?;
                        let noisy_util = actual_util
                            * self.model.multiplier(
                                self.client_salt[client],
                                t,
                                self.timestep_minutes,
                            );
                        Ok(spare_from_utilization(capacity, noisy_util))
                    }
                }
            }
        }
    }

    /// Fails unless every registered series covers `[t0, t_end)`.
    pub fn ensure_coverage(&self, t0: u64, t_end: u64) -> Result<(), TraceError> {
        let check = |series: &TraceSeries| -> Result<(), TraceError> {
            if series.start_timestep > t0 || series.end_timestep() < t_end {
                return Err(TraceError::TraceExhausted {
                    timestep: t_end.saturating_sub(1),
                    start: series.start_timestep,
                    end: series.end_timestep(),
                });
            }
            Ok(())
        };
        for (idx, series) in self.domain_energy.iter().enumerate() {
            if !self.unlimited_energy[idx] {
                check(series)?;
            }
        }
        for series in self.domain_energy_forecast.iter().flatten() {
            check(series)?;
        }
        for series in self.client_utilization.iter().flatten() {
            check(series)?;
        }
        Ok(())
    }
}

/// Spare batches from a utilization fraction, rounded down.
fn spare_from_utilization(capacity: u32, utilization: f64) -> u32 {
    let spare = capacity as f64 * (1.0 - utilization.clamp(0.0, 1.0));
    (spare.floor() as i64).clamp(0, capacity as i64) as u32
}
