//! Synthetic training proxy.
//!
//! Stands in for real model training: per-round batch work moves a global
//! progress scalar, losses decay exponentially with progress, and a bounded
//! accuracy proxy saturates towards `a_max`. A diversity bonus rewards
//! rounds whose accepted clients cover more of the data mass, so fair
//! participation translates into faster proxy convergence. The proxy is a
//! declared stand-in: it preserves the statistical signals selection
//! strategies consume, not absolute accuracy numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProxyConfig {
    /// Saturation accuracy.
    pub a_max: f64,
    /// Progress rate constant shared by the loss decay and accuracy curve.
    pub rate: f64,
    /// Diversity bonus weight (`>= 0`).
    pub diversity_bonus: f64,
    /// Initial per-batch loss scale.
    pub base_loss: f64,
    /// Log-normal sigma of the static per-client loss multiplier.
    pub client_noise_sigma: f64,
}

impl Default for ProxyConfig {
    fn default() -> Self {
        ProxyConfig {
            a_max: 0.7,
            rate: 2.5e-4,
            diversity_bonus: 6.0,
            base_loss: 2.0,
            client_noise_sigma: 0.2,
        }
    }
}

/// Proxy model state. Given the same seed and inputs, all outputs are
/// deterministic.
#[derive(Debug, Clone)]
pub struct ProxyModel {
    config: ProxyConfig,
    global_progress: f64,
    /// Per-client share of the total data mass; sums to 1.
    data_weights: Vec<f64>,
    /// Static per-client loss multiplier.
    client_noise: Vec<f64>,
}

impl ProxyModel {
    /// Builds the proxy for a scenario, deriving data weights from each
    /// client's sample count.
    pub fn for_scenario(scenario: &Scenario, config: ProxyConfig, seed: u64) -> Self {
        let weights: Vec<f64> = scenario
            .clients
            .iter()
            .map(|c| c.num_samples as f64)
            .collect();
        Self::from_weights(weights, config, seed)
    }

    pub fn from_weights(raw_weights: Vec<f64>, config: ProxyConfig, seed: u64) -> Self {
        assert!(!raw_weights.is_empty());
        assert!(config.diversity_bonus >= 0.0);
        let total: f64 = raw_weights.iter().sum();
        assert!(total > 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sigma = config.client_noise_sigma;
        let client_noise = raw_weights
            .iter()
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (sigma * z - sigma * sigma / 2.0).exp()
            })
            .collect();
        ProxyModel {
            config,
            global_progress: 0.0,
            data_weights: raw_weights.iter().map(|w| w / total).collect(),
            client_noise,
        }
    }

    pub fn progress(&self) -> f64 {
        self.global_progress
    }

    pub fn data_weight(&self, client: usize) -> f64 {
        self.data_weights[client]
    }

    /// Accuracy proxy in `[0, a_max]`, monotone in progress.
    pub fn accuracy(&self) -> f64 {
        self.config.a_max * (1.0 - (-self.config.rate * self.global_progress).exp())
    }

    /// Per-batch losses for one client training `batches` batches at the
    /// current global progress.
    pub fn local_train(&self, client: usize, batches: u32) -> Vec<f64> {
        let loss = self.config.base_loss
            * (-self.config.rate * self.global_progress).exp()
            * self.client_noise[client];
        vec![loss; batches as usize]
    }

    /// Folds accepted contributions `(client, batches)` into global
    /// progress. Discarded straggler work must not be passed in.
    pub fn aggregate(&mut self, accepted: &[(usize, u32)]) {
        if accepted.is_empty() {
            return;
        }
        let weighted_batches: f64 = accepted
            .iter()
            .map(|(client, batches)| self.data_weights[*client] * *batches as f64)
            .sum();
        let covered_mass: f64 = accepted
            .iter()
            .map(|(client, _)| self.data_weights[*client])
            .sum();
        self.global_progress +=
            weighted_batches * (1.0 + self.config.diversity_bonus * covered_mass);
    }
}
