//! Shared test support: exhaustive oracles for the selection program and a
//! seeded generator of small instances.
//!
//! The oracles stay independent of the solver: they enumerate every
//! size-`n` subset and every integer batch grid. Instances use dyadic
//! energies, efficiencies and utilities so all objective arithmetic is
//! exact in binary floating point and equality checks carry no tolerance.

use fedzero::selection::{CandidateClient, DomainForecast, SelectionInput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// All batch vectors of length `d` with `vector[t] <= spare[t]` and a total
/// in `[min_batches, max_batches]`.
fn feasible_vectors(client: &CandidateClient, d: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut current = vec![0u32; d];
    fn rec(
        t: usize,
        d: usize,
        client: &CandidateClient,
        current: &mut Vec<u32>,
        sum: u32,
        out: &mut Vec<Vec<u32>>,
    ) {
        if t == d {
            if sum >= client.min_batches && sum <= client.max_batches {
                out.push(current.clone());
            }
            return;
        }
        let cap = client.spare_capacity[t].min(client.max_batches.saturating_sub(sum));
        for v in 0..=cap {
            current[t] = v;
            rec(t + 1, d, client, current, sum + v, out);
            current[t] = 0;
        }
    }
    rec(0, d, client, &mut current, 0, &mut out);
    out
}

fn subsets(count: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::new();
    fn rec(start: usize, count: usize, n: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == n {
            out.push(current.clone());
            return;
        }
        for i in start..count {
            current.push(i);
            rec(i + 1, count, n, current, out);
            current.pop();
        }
    }
    rec(0, count, n, &mut current, &mut out);
    out
}

/// Exhaustive optimum of the selection program at duration `d` with
/// exactly `n` selected clients, ignoring the pre-filters (the raw
/// program). Returns the maximal objective, or `None` when infeasible.
pub fn oracle_solve_mip(input: &SelectionInput, d: u32, n: u32) -> Option<f64> {
    let d = d as usize;
    let vectors: Vec<Vec<Vec<u32>>> = input
        .clients
        .iter()
        .map(|c| feasible_vectors(c, d))
        .collect();
    let mut best: Option<f64> = None;
    for subset in subsets(input.clients.len(), n as usize) {
        let mut used = vec![vec![0.0f64; d]; input.domains.len()];
        rec_assign(input, &subset, &vectors, 0, &mut used, 0.0, &mut best, d);
    }
    best
}

fn rec_assign(
    input: &SelectionInput,
    subset: &[usize],
    vectors: &[Vec<Vec<u32>>],
    i: usize,
    used: &mut Vec<Vec<f64>>,
    value: f64,
    best: &mut Option<f64>,
    d: usize,
) {
    if i == subset.len() {
        if best.map(|b| value > b).unwrap_or(true) {
            *best = Some(value);
        }
        return;
    }
    let client = &input.clients[subset[i]];
    for vector in &vectors[subset[i]] {
        let mut ok = true;
        for t in 0..d {
            let add = vector[t] as f64 * client.energy_per_batch;
            if used[client.domain][t] + add
                > input.domains[client.domain].excess_energy[t] + 1e-9
            {
                ok = false;
                break;
            }
        }
        if !ok {
            continue;
        }
        for t in 0..d {
            used[client.domain][t] += vector[t] as f64 * client.energy_per_batch;
        }
        let total: u32 = vector.iter().sum();
        rec_assign(
            input,
            subset,
            vectors,
            i + 1,
            used,
            value + client.utility * total as f64,
            best,
            d,
        );
        for t in 0..d {
            used[client.domain][t] -= vector[t] as f64 * client.energy_per_batch;
        }
    }
}

/// Independent re-statement of the pre-filters: domains need positive
/// energy in every timestep, clients need positive utility, a surviving
/// domain, and an optimistic budget covering their minimum batches.
pub fn oracle_filters(input: &SelectionInput, d: u32) -> (Vec<bool>, Vec<bool>) {
    let d = d as usize;
    let surviving: Vec<bool> = input
        .domains
        .iter()
        .map(|p| p.excess_energy[..d].iter().all(|r| *r > 0.0))
        .collect();
    let eligible: Vec<bool> = input
        .clients
        .iter()
        .map(|c| {
            if c.utility <= 0.0 || !surviving[c.domain] {
                return false;
            }
            let budget: f64 = (0..d)
                .map(|t| {
                    (input.domains[c.domain].excess_energy[t] / c.energy_per_batch)
                        .min(c.spare_capacity[t] as f64)
                })
                .sum();
            budget >= c.min_batches as f64
        })
        .collect();
    (surviving, eligible)
}

/// Exhaustive round selection: linear scan over durations with the
/// independent filters and the exhaustive program optimum. Returns the
/// minimal feasible duration and its objective.
pub fn oracle_select_round(input: &SelectionInput) -> Option<(u32, f64)> {
    for d in 1..=input.max_duration {
        let (_surviving, eligible) = oracle_filters(input, d);
        let kept: Vec<usize> = (0..input.clients.len()).filter(|c| eligible[*c]).collect();
        if kept.len() < input.clients_per_round as usize {
            continue;
        }
        let filtered = SelectionInput {
            domains: input.domains.clone(),
            clients: kept.iter().map(|c| input.clients[*c].clone()).collect(),
            clients_per_round: input.clients_per_round,
            max_duration: input.max_duration,
        };
        if let Some(value) = oracle_solve_mip(&filtered, d, input.clients_per_round) {
            return Some((d, value));
        }
    }
    None
}

/// Small random instance with exact dyadic arithmetic: at most 5 clients,
/// 2 domains, horizon 4, `n <= 2`, batch counts bounded by 6.
pub fn random_instance(seed: u64) -> SelectionInput {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let num_domains = rng.random_range(1..=2usize);
    let n = rng.random_range(1..=2u32);
    let num_clients = rng.random_range(n as usize..=5);
    let d_max = rng.random_range(1..=4u32);
    let domains: Vec<DomainForecast> = (0..num_domains)
        .map(|p| DomainForecast {
            id: format!("p{p}").as_str().into(),
            excess_energy: (0..d_max)
                .map(|_| rng.random_range(0..=12u32) as f64)
                .collect(),
        })
        .collect();
    let clients: Vec<CandidateClient> = (0..num_clients)
        .map(|c| {
            let min_batches = rng.random_range(1..=3u32);
            CandidateClient {
                id: format!("c{c}").as_str().into(),
                domain: rng.random_range(0..num_domains),
                utility: rng.random_range(1..=16u32) as f64 / 4.0,
                energy_per_batch: rng.random_range(1..=6u32) as f64 / 2.0,
                min_batches,
                max_batches: rng.random_range(min_batches..=6u32),
                spare_capacity: (0..d_max).map(|_| rng.random_range(0..=6u32)).collect(),
            }
        })
        .collect();
    SelectionInput {
        domains,
        clients,
        clients_per_round: n,
        max_duration: d_max,
    }
}

/// Variant of `random_instance` with strictly positive energy everywhere,
/// where domain survival never changes with the duration.
pub fn random_positive_instance(seed: u64) -> SelectionInput {
    let mut input = random_instance(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xdead);
    for domain in &mut input.domains {
        for r in &mut domain.excess_energy {
            if *r <= 0.0 {
                *r = rng.random_range(1..=12u32) as f64;
            }
        }
    }
    input
}
