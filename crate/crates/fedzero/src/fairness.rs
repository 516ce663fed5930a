//! Statistical utility weights and the participation blocklist.
//!
//! Clients whose contribution was accepted are blocklisted and carry zero
//! utility until released. At the start of each round attempt the release
//! reference `omega` is recomputed as the mean participation count and every
//! blocklisted client is independently released with probability
//! `(p(c) - omega)^(-alpha)`, clamped into `[0, 1]`.

use rand::Rng;
use thiserror::Error;

use crate::scenario::{ClientState, Scenario};

#[derive(Debug, Error, PartialEq)]
pub enum UtilityError {
    #[error("client participated before but has no recorded losses")]
    MissingLossHistory,
}

/// Oort-style statistical utility from a client's sample count, recorded
/// per-batch losses and participation count. First-time clients (no prior
/// participation) get weight 1.
pub fn statistical_utility(
    num_samples: u32,
    per_batch_losses: &[f64],
    rounds_participated: u32,
) -> Result<f64, UtilityError> {
    if rounds_participated == 0 {
        return Ok(1.0);
    }
    if per_batch_losses.is_empty() {
        return Err(UtilityError::MissingLossHistory);
    }
    let samples = num_samples as f64;
    let sum_sq: f64 = per_batch_losses.iter().map(|l| l * l).sum();
    Ok(samples * (sum_sq / samples).sqrt())
}

/// Probability that a blocklisted client is released this round.
pub fn release_probability(rounds_participated: u32, omega: f64, alpha: f64) -> f64 {
    let gap = rounds_participated as f64 - omega;
    if gap > 0.0 {
        gap.powf(-alpha).min(1.0)
    } else {
        1.0
    }
}

/// A contribution accepted at the end of a round.
#[derive(Debug, Clone)]
pub struct AcceptedContribution {
    pub client: usize,
    pub batches: u32,
    pub energy: f64,
    /// Sum of squared per-batch losses reported by the training backend.
    pub sum_squared_loss: f64,
}

/// Single-writer ledger of per-client participation state, owned by the
/// experiment control loop.
#[derive(Debug, Clone)]
pub struct FairnessLedger {
    states: Vec<ClientState>,
    num_samples: Vec<u32>,
    omega: f64,
    alpha: f64,
    blocklist_enabled: bool,
}

impl FairnessLedger {
    pub fn new(scenario: &Scenario, blocklist_enabled: bool) -> Self {
        FairnessLedger {
            states: vec![ClientState::default(); scenario.clients.len()],
            num_samples: scenario.clients.iter().map(|c| c.num_samples).collect(),
            omega: 0.0,
            alpha: scenario.params.blocklist_alpha,
            blocklist_enabled,
        }
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn states(&self) -> &[ClientState] {
        &self.states
    }

    pub fn state(&self, client: usize) -> &ClientState {
        &self.states[client]
    }

    pub fn blocklist_size(&self) -> usize {
        self.states.iter().filter(|s| s.blocklisted).count()
    }

    /// Selection weight: zero while blocklisted, otherwise the statistical
    /// utility derived from the recorded loss statistic.
    pub fn utility(&self, client: usize) -> f64 {
        if self.states[client].blocklisted {
            return 0.0;
        }
        self.utility_ignoring_blocklist(client)
    }

    /// Statistical utility without the blocklist zeroing, as consumed by the
    /// Oort baselines.
    pub fn utility_ignoring_blocklist(&self, client: usize) -> f64 {
        let state = &self.states[client];
        if state.rounds_participated == 0 {
            return 1.0;
        }
        self.num_samples[client] as f64 * state.last_mean_squared_loss.sqrt()
    }

    /// Start-of-round update: recompute `omega` and roll independent release
    /// draws for every blocklisted client, in client index order.
    pub fn round_tick<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let total: u64 = self
            .states
            .iter()
            .map(|s| s.rounds_participated as u64)
            .sum();
        self.omega = if self.states.is_empty() {
            0.0
        } else {
            total as f64 / self.states.len() as f64
        };
        for state in &mut self.states {
            if state.blocklisted {
                let p = release_probability(state.rounds_participated, self.omega, self.alpha);
                if rng.random::<f64>() < p {
                    state.blocklisted = false;
                }
            }
        }
    }

    /// Books accepted contributions: increments participation, refreshes the
    /// loss statistic and blocklists the client (when the blocklist is
    /// active). Discarded stragglers and unselected clients are untouched.
    pub fn record_participation(&mut self, accepted: &[AcceptedContribution]) {
        for contribution in accepted {
            let state = &mut self.states[contribution.client];
            state.rounds_participated += 1;
            state.blocklisted = self.blocklist_enabled;
            state.last_mean_squared_loss =
                contribution.sum_squared_loss / self.num_samples[contribution.client] as f64;
            state.cumulative_batches += contribution.batches as u64;
            state.cumulative_energy += contribution.energy;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{
        validate_scenario, ClientSpec, PowerDomain, SimulationParams, TraceRef,
    };
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scenario(n: usize, alpha: f64) -> Scenario {
        let clients: Vec<ClientSpec> = (0..n)
            .map(|i| ClientSpec {
                id: format!("c{i:02}").as_str().into(),
                domain_id: "d0".into(),
                max_capacity: 10,
                energy_per_batch: 1.0,
                min_batches: 1,
                max_batches: 10,
                num_samples: 4,
            })
            .collect();
        let domain = PowerDomain {
            id: "d0".into(),
            clients: clients.iter().map(|c| c.id.clone()).collect(),
            trace_ref: TraceRef("t".into()),
            forecast_ref: None,
        };
        let params = SimulationParams {
            blocklist_alpha: alpha,
            ..SimulationParams::default()
        };
        validate_scenario(clients, vec![domain], params).unwrap()
    }

    #[test]
    fn first_time_clients_have_unit_utility() {
        assert_eq!(statistical_utility(100, &[], 0).unwrap(), 1.0);
    }

    #[test]
    fn utility_formula_matches_direct_evaluation() {
        // 4 samples, all losses 0.5: 4 * sqrt((4 * 0.25) / 4) = 2.
        let sigma = statistical_utility(4, &[0.5, 0.5, 0.5, 0.5], 1).unwrap();
        assert!((sigma - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_losses_give_zero_utility() {
        assert_eq!(statistical_utility(8, &[0.0, 0.0], 3).unwrap(), 0.0);
    }

    #[test]
    fn missing_history_is_an_error() {
        assert_eq!(
            statistical_utility(8, &[], 2),
            Err(UtilityError::MissingLossHistory)
        );
    }

    #[test]
    fn release_probability_branches() {
        // p(c) == omega hits the unconditional branch.
        assert_eq!(release_probability(5, 5.0, 1.0), 1.0);
        // Gap of 4 with alpha 1: 4^-1.
        assert_eq!(release_probability(5, 1.0, 1.0), 0.25);
        // Gap below 1 would exceed 1 and is clamped.
        assert_eq!(release_probability(5, 4.5, 1.0), 1.0);
        // Alpha 0 releases whenever defined.
        assert_eq!(release_probability(9, 2.0, 0.0), 1.0);
    }

    #[test]
    fn release_probability_stays_in_unit_interval() {
        for p in 0..50u32 {
            for omega10 in 0..500u32 {
                for alpha10 in 0..40u32 {
                    let prob =
                        release_probability(p, omega10 as f64 / 10.0, alpha10 as f64 / 10.0);
                    assert!((0.0..=1.0).contains(&prob));
                }
            }
        }
    }

    #[test]
    fn ledger_blocklists_accepted_and_zeroes_utility() {
        let sc = scenario(3, 1.0);
        let mut ledger = FairnessLedger::new(&sc, true);
        ledger.record_participation(&[AcceptedContribution {
            client: 0,
            batches: 6,
            energy: 6.0,
            sum_squared_loss: 4.0 * 0.25,
        }]);
        assert!(ledger.state(0).blocklisted);
        assert_eq!(ledger.state(0).rounds_participated, 1);
        assert_eq!(ledger.utility(0), 0.0);
        // sigma without the blocklist: 4 * sqrt(1/4 * 1.0) = 2.
        assert!((ledger.utility_ignoring_blocklist(0) - 2.0).abs() < 1e-12);
        // Straggler and unselected clients unchanged.
        assert_eq!(ledger.state(1), &ClientState::default());
        assert_eq!(ledger.utility(1), 1.0);
    }

    #[test]
    fn alpha_zero_releases_every_blocklisted_client() {
        let sc = scenario(4, 0.0);
        let mut ledger = FairnessLedger::new(&sc, true);
        let accepted: Vec<AcceptedContribution> = (0..4)
            .map(|client| AcceptedContribution {
                client,
                batches: 1,
                energy: 1.0,
                sum_squared_loss: 1.0,
            })
            .collect();
        ledger.record_participation(&accepted);
        assert_eq!(ledger.blocklist_size(), 4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        ledger.round_tick(&mut rng);
        assert_eq!(ledger.blocklist_size(), 0);
    }

    #[test]
    fn empty_blocklist_tick_only_updates_omega() {
        let sc = scenario(2, 1.0);
        let mut ledger = FairnessLedger::new(&sc, true);
        ledger.record_participation(&[AcceptedContribution {
            client: 1,
            batches: 1,
            energy: 1.0,
            sum_squared_loss: 1.0,
        }]);
        ledger.states[1].blocklisted = false;
        let before = ledger.states.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        ledger.round_tick(&mut rng);
        assert_eq!(ledger.states, before);
        assert_eq!(ledger.omega(), 0.5);
    }

    #[test]
    fn empirical_release_rate_matches_probability() {
        // One client ten rounds ahead of the mean: expect a 10% release rate.
        let sc = scenario(2, 1.0);
        let mut ledger = FairnessLedger::new(&sc, true);
        for _ in 0..20 {
            ledger.record_participation(&[AcceptedContribution {
                client: 0,
                batches: 1,
                energy: 1.0,
                sum_squared_loss: 1.0,
            }]);
        }
        // omega = mean(20, 0) = 10, so the gap is 10.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let trials = 100_000;
        let mut released = 0u32;
        for _ in 0..trials {
            ledger.states[0].blocklisted = true;
            ledger.round_tick(&mut rng);
            if !ledger.state(0).blocklisted {
                released += 1;
            }
        }
        let rate = released as f64 / trials as f64;
        assert!((rate - 0.1).abs() < 0.01, "rate {rate}");
    }
}
