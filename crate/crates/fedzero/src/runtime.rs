//! Round execution against actual traces.
//!
//! The runtime is reactive: it ignores the planned batch schedule and at
//! every timestep attributes the actually available excess energy among a
//! domain's participants, then steps each client within its actual spare
//! capacity. Power attribution is the two-step scheme: energy first goes
//! to clients below their minimum participation (weighted by the energy
//! still required to reach it), leftovers go to clients below their
//! maximum, with per-client caps and redistribution of capped surplus
//! until a fixed point.

use std::collections::BTreeMap;

use crate::forecast::ResourceProviders;
use crate::scenario::Scenario;
use crate::trace::TraceError;

/// One participant's standing claim on domain power at one timestep.
#[derive(Debug, Clone)]
pub struct PowerClaim {
    pub energy_per_batch: f64,
    pub min_batches: u32,
    pub max_batches: u32,
    /// Batches already computed this round.
    pub computed: u32,
    /// Actual spare capacity this timestep, in batches.
    pub capacity: u32,
}

impl PowerClaim {
    /// Maximum energy the client can absorb this timestep.
    fn cap(&self) -> f64 {
        let headroom = self.max_batches.saturating_sub(self.computed);
        self.energy_per_batch * headroom.min(self.capacity) as f64
    }
}

/// Splits the available energy among participants. Returns per-client
/// energy shares summing to at most `available_energy`.
pub fn attribute_power(claims: &[PowerClaim], available_energy: f64) -> Vec<f64> {
    let mut shares = vec![0.0; claims.len()];
    if claims.is_empty() || available_energy <= 0.0 {
        return shares;
    }
    let mut remaining = available_energy;
    // Step 1: clients below their minimum, weighted by remaining energy to
    // the minimum threshold.
    remaining = proportional_step(
        claims,
        &mut shares,
        remaining,
        |claim| claim.computed < claim.min_batches,
        |claim| claim.energy_per_batch * (claim.min_batches - claim.computed) as f64,
    );
    // Step 2: leftover energy to everyone below their maximum.
    proportional_step(
        claims,
        &mut shares,
        remaining,
        |claim| claim.computed < claim.max_batches,
        |claim| claim.energy_per_batch * (claim.max_batches - claim.computed) as f64,
    );
    shares
}

/// One attribution step: proportional split by weight with per-client caps;
/// energy freed by capped clients is redistributed among the rest until a
/// fixed point (at most one pass per participant).
fn proportional_step(
    claims: &[PowerClaim],
    shares: &mut [f64],
    budget: f64,
    in_pool: impl Fn(&PowerClaim) -> bool,
    weight: impl Fn(&PowerClaim) -> f64,
) -> f64 {
    if budget <= 0.0 {
        return 0.0;
    }
    let mut active: Vec<usize> = (0..claims.len())
        .filter(|i| {
            let claim = &claims[*i];
            in_pool(claim) && claim.cap() - shares[*i] > 0.0 && weight(claim) > 0.0
        })
        .collect();
    let mut remaining = budget;
    while !active.is_empty() && remaining > 0.0 {
        if remaining.is_infinite() {
            // Unlimited supply: everyone is capped.
            for &i in &active {
                shares[i] = claims[i].cap();
            }
            return remaining;
        }
        let total_weight: f64 = active.iter().map(|i| weight(&claims[*i])).sum();
        let mut capped = Vec::new();
        for &i in &active {
            let proposal = remaining * weight(&claims[i]) / total_weight;
            let room = claims[i].cap() - shares[i];
            if proposal >= room {
                capped.push(i);
            }
        }
        if capped.is_empty() {
            for &i in &active {
                shares[i] += remaining * weight(&claims[i]) / total_weight;
            }
            return 0.0;
        }
        for &i in &capped {
            let room = claims[i].cap() - shares[i];
            shares[i] += room;
            remaining -= room;
        }
        active.retain(|i| !capped.contains(i));
        if remaining <= 0.0 {
            return 0.0;
        }
    }
    remaining
}

/// Batches a client computes from an energy share this timestep: the floor
/// of the energy bound, additionally limited by actual spare capacity and
/// the remaining round headroom.
pub fn step_client(energy_share: f64, energy_per_batch: f64, spare_capacity: u32, headroom: u32) -> u32 {
    let limit = spare_capacity.min(headroom);
    if limit == 0 || energy_share <= 0.0 {
        return 0;
    }
    if energy_share.is_infinite() {
        return limit;
    }
    let energy_bound = (energy_share / energy_per_batch + 1e-9).floor();
    if energy_bound >= limit as f64 {
        limit
    } else {
        energy_bound as u32
    }
}

/// Outcome of running one round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundResult {
    pub started_at: u64,
    pub realized_duration: u32,
    /// Participants in scenario client-index order.
    pub participants: Vec<usize>,
    /// Batches computed per participant, aligned with `participants`.
    pub batches: Vec<u32>,
    /// Acceptance flags (`batches >= min_batches`), aligned.
    pub accepted: Vec<bool>,
    /// Participants whose work is discarded.
    pub discarded: Vec<usize>,
    /// Energy consumed per domain per round timestep, watt-minutes.
    pub energy_used: BTreeMap<usize, Vec<f64>>,
}

impl RoundResult {
    pub fn accepted_count(&self) -> usize {
        self.accepted.iter().filter(|a| **a).count()
    }

    pub fn total_batches(&self) -> u64 {
        self.batches.iter().map(|b| *b as u64).sum()
    }

    pub fn total_energy(&self) -> f64 {
        self.energy_used
            .values()
            .map(|per_t| per_t.iter().sum::<f64>())
            .sum()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RoundOptions {
    pub max_duration: u32,
    /// The round ends once this many participants reached their minimum
    /// (over-selection waits only for the first `n` responses).
    pub wait_for: usize,
    /// Ignore energy and capacity limits (upper-bound baseline).
    pub unconstrained: bool,
    /// Carry fractional batch progress across timesteps.
    pub carry_fractional_progress: bool,
}

/// Executes a round from `t0` against actual traces. Ends at the first
/// timestep where `wait_for` participants reached their minimum batches, or
/// after `max_duration` timesteps; participants below their minimum at the
/// end are discarded. Clients past their minimum keep computing towards
/// their maximum until the round ends.
pub fn run_round(
    scenario: &Scenario,
    providers: &ResourceProviders,
    participants: &[usize],
    t0: u64,
    opts: &RoundOptions,
) -> Result<RoundResult, TraceError> {
    let mut participants: Vec<usize> = participants.to_vec();
    participants.sort_unstable();
    participants.dedup();
    let wait_for = opts.wait_for.min(participants.len()).max(1);

    // Group participants per domain, preserving index order.
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (pos, &client) in participants.iter().enumerate() {
        groups.entry(scenario.domain_of(client)).or_default().push(pos);
    }

    let mut computed = vec![0u32; participants.len()];
    let mut carry = vec![0.0f64; participants.len()];
    let mut energy_used: BTreeMap<usize, Vec<f64>> =
        groups.keys().map(|d| (*d, Vec::new())).collect();
    let mut duration = 0u32;

    if participants.is_empty() {
        return Ok(RoundResult {
            started_at: t0,
            realized_duration: 0,
            participants,
            batches: computed,
            accepted: Vec::new(),
            discarded: Vec::new(),
            energy_used,
        });
    }

    for rel in 0..opts.max_duration {
        let t = t0 + rel as u64;
        for (&domain, members) in &groups {
            let available = if opts.unconstrained {
                f64::INFINITY
            } else {
                providers.actual_excess_energy(domain, t)?
            };
            let mut claims = Vec::with_capacity(members.len());
            for &pos in members {
                let client = &scenario.clients[participants[pos]];
                let capacity = if opts.unconstrained {
                    client.max_capacity
                } else {
                    providers.actual_spare_capacity(participants[pos], t)?
                };
                claims.push(PowerClaim {
                    energy_per_batch: client.energy_per_batch,
                    min_batches: client.min_batches,
                    max_batches: client.max_batches,
                    computed: computed[pos],
                    capacity,
                });
            }
            let shares = attribute_power(&claims, available);
            let mut consumed = 0.0;
            for (slot, &pos) in members.iter().enumerate() {
                let claim = &claims[slot];
                let effective = shares[slot] + carry[pos];
                let headroom = claim.max_batches - claim.computed;
                let batches =
                    step_client(effective, claim.energy_per_batch, claim.capacity, headroom);
                computed[pos] += batches;
                consumed += batches as f64 * claim.energy_per_batch;
                if opts.carry_fractional_progress {
                    let spent = batches as f64 * claim.energy_per_batch;
                    let energy_bound = step_client(
                        effective,
                        claim.energy_per_batch,
                        u32::MAX,
                        u32::MAX,
                    );
                    // Keep the remainder only when energy was the binding
                    // limit; stranded energy cannot be stored.
                    carry[pos] = if batches == energy_bound && effective.is_finite() {
                        (effective - spent).max(0.0)
                    } else {
                        0.0
                    };
                }
            }
            energy_used.get_mut(&domain).unwrap().push(consumed);
        }
        duration = rel + 1;
        let done = participants
            .iter()
            .enumerate()
            .filter(|(pos, &client)| computed[*pos] >= scenario.clients[client].min_batches)
            .count();
        if done >= wait_for {
            break;
        }
    }

    let accepted: Vec<bool> = participants
        .iter()
        .enumerate()
        .map(|(pos, &client)| computed[pos] >= scenario.clients[client].min_batches)
        .collect();
    let discarded: Vec<usize> = participants
        .iter()
        .zip(&accepted)
        .filter(|(_, ok)| !**ok)
        .map(|(client, _)| *client)
        .collect();
    Ok(RoundResult {
        started_at: t0,
        realized_duration: duration,
        participants,
        batches: computed,
        accepted,
        discarded,
        energy_used,
    })
}
