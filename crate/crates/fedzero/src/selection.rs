//! Round selection: pre-filters, the iterative duration search and plan
//! assembly.
//!
//! For a candidate duration `d`, domains without excess energy in every
//! timestep are dropped, then clients that are blocklisted (zero utility)
//! or whose optimistic per-timestep budget cannot reach their minimum
//! batches are dropped, and the remaining program is handed to the solver.
//! The search returns the plan for the smallest feasible duration.
//!
//! Feasibility is monotone in `d` only while the set of surviving domains
//! is fixed: growing `d` accumulates budget but can also drop a domain
//! whose energy hits zero. The binary search therefore splits `[1, d_max]`
//! into segments of constant domain survival and runs a gallop-plus-bisect
//! probe inside each segment, which returns exactly the linear-scan result
//! at a fraction of the solver calls.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mip::{solve_selection_mip, MipSolution, SolverLimits};
use crate::par::Parallelism;
use crate::scenario::{ClientId, DomainId};

/// Per-domain forecast slice used for one selection.
#[derive(Debug, Clone)]
pub struct DomainForecast {
    pub id: DomainId,
    /// Forecasted excess energy per timestep (watt-minutes), length at
    /// least `max_duration`.
    pub excess_energy: Vec<f64>,
}

/// Per-client candidate data used for one selection.
#[derive(Debug, Clone)]
pub struct CandidateClient {
    pub id: ClientId,
    /// Index into `SelectionInput::domains`.
    pub domain: usize,
    /// Statistical utility weight; zero excludes the client.
    pub utility: f64,
    pub energy_per_batch: f64,
    pub min_batches: u32,
    pub max_batches: u32,
    /// Forecasted spare capacity per timestep, length at least
    /// `max_duration`.
    pub spare_capacity: Vec<u32>,
}

/// One round's selection problem.
#[derive(Debug, Clone)]
pub struct SelectionInput {
    pub domains: Vec<DomainForecast>,
    pub clients: Vec<CandidateClient>,
    pub clients_per_round: u32,
    pub max_duration: u32,
}

#[derive(Debug, Error)]
pub enum SelectionInputError {
    #[error("client {0} references domain index {1} out of range")]
    DomainOutOfRange(usize, usize),
    #[error("client {0}: {1}")]
    BadClient(usize, &'static str),
    #[error("domain {0} forecast shorter than max_duration")]
    ShortEnergyForecast(usize),
    #[error("client {0} capacity forecast shorter than max_duration")]
    ShortCapacityForecast(usize),
    #[error("clients_per_round and max_duration must be at least 1")]
    BadParams,
    #[error("clients must be sorted by id and unique; index order is the tie-break order")]
    UnsortedClients,
}

impl SelectionInput {
    pub fn validate(&self) -> Result<(), SelectionInputError> {
        if self.clients_per_round < 1 || self.max_duration < 1 {
            return Err(SelectionInputError::BadParams);
        }
        let d = self.max_duration as usize;
        for pair in self.clients.windows(2) {
            if pair[0].id >= pair[1].id {
                return Err(SelectionInputError::UnsortedClients);
            }
        }
        for (i, domain) in self.domains.iter().enumerate() {
            if domain.excess_energy.len() < d {
                return Err(SelectionInputError::ShortEnergyForecast(i));
            }
        }
        for (i, client) in self.clients.iter().enumerate() {
            if client.domain >= self.domains.len() {
                return Err(SelectionInputError::DomainOutOfRange(i, client.domain));
            }
            if client.spare_capacity.len() < d {
                return Err(SelectionInputError::ShortCapacityForecast(i));
            }
            if !(client.utility >= 0.0) || !client.utility.is_finite() {
                return Err(SelectionInputError::BadClient(i, "utility must be >= 0"));
            }
            if !(client.energy_per_batch > 0.0) {
                return Err(SelectionInputError::BadClient(i, "energy_per_batch must be > 0"));
            }
            if client.min_batches < 1 || client.min_batches > client.max_batches {
                return Err(SelectionInputError::BadClient(i, "batch bounds out of order"));
            }
        }
        Ok(())
    }
}

/// Planned round: selected clients, their expected batch schedule and the
/// expected duration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundPlan {
    pub duration: u32,
    /// Selected client ids, ascending.
    pub selected: Vec<ClientId>,
    /// Expected batches per timestep for each selected client; rows have
    /// length `duration`.
    pub expected_batches: BTreeMap<ClientId, Vec<u32>>,
    /// Utility-weighted expected batch total.
    pub objective: f64,
}

impl RoundPlan {
    /// Checks the plan against its input: batch bounds per selected client,
    /// per-domain per-timestep energy, spare capacity, selection count.
    /// Solver-independent by construction.
    pub fn check_invariants(&self, input: &SelectionInput) -> Result<(), String> {
        if self.selected.len() != input.clients_per_round as usize {
            return Err(format!(
                "selected {} clients, expected {}",
                self.selected.len(),
                input.clients_per_round
            ));
        }
        let d = self.duration as usize;
        let by_id: BTreeMap<&ClientId, &CandidateClient> =
            input.clients.iter().map(|c| (&c.id, c)).collect();
        let mut energy_used: Vec<Vec<f64>> = input
            .domains
            .iter()
            .map(|_| vec![0.0; d])
            .collect();
        for id in &self.selected {
            let client = by_id
                .get(id)
                .ok_or_else(|| format!("selected unknown client {id}"))?;
            let batches = self
                .expected_batches
                .get(id)
                .ok_or_else(|| format!("selected client {id} has no schedule"))?;
            if batches.len() != d {
                return Err(format!("schedule length mismatch for {id}"));
            }
            let total: u64 = batches.iter().map(|b| *b as u64).sum();
            if total < client.min_batches as u64 || total > client.max_batches as u64 {
                return Err(format!(
                    "client {id} total {total} outside [{}, {}]",
                    client.min_batches, client.max_batches
                ));
            }
            for (t, b) in batches.iter().enumerate() {
                if *b > client.spare_capacity[t] {
                    return Err(format!("client {id} exceeds spare capacity at t={t}"));
                }
                energy_used[client.domain][t] += *b as f64 * client.energy_per_batch;
            }
        }
        for (id, batches) in &self.expected_batches {
            if !self.selected.contains(id) && batches.iter().any(|b| *b != 0) {
                return Err(format!("unselected client {id} has non-zero schedule"));
            }
        }
        for (p, used) in energy_used.iter().enumerate() {
            for (t, e) in used.iter().enumerate() {
                let budget = input.domains[p].excess_energy[t];
                // Tolerance covers float summation order only; batch counts
                // are integral.
                if *e > budget + 1e-6 * budget.abs().max(1.0) {
                    return Err(format!(
                        "domain {} over budget at t={t}: {e} > {budget}",
                        input.domains[p].id
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Typed outcome of a selection attempt. No feasible selection is a normal
/// result that tells the caller to wait one timestep and retry.
#[derive(Debug, Clone)]
pub enum SelectionOutcome {
    Selected(RoundPlan),
    NoFeasibleSelection,
}

impl SelectionOutcome {
    pub fn plan(&self) -> Option<&RoundPlan> {
        match self {
            SelectionOutcome::Selected(plan) => Some(plan),
            SelectionOutcome::NoFeasibleSelection => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DurationSearchMode {
    /// Segmented gallop-plus-bisect probe; equals the linear scan result.
    #[default]
    Binary,
    /// Plain scan over `d = 1..=d_max`.
    Linear,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SelectOptions {
    pub mode: DurationSearchMode,
    pub limits: SolverLimits,
    pub parallel: Parallelism,
}

/// Keeps exactly the domains with positive forecasted excess energy in
/// every timestep of the candidate duration.
pub fn filter_power_domains(input: &SelectionInput, duration: u32) -> Vec<bool> {
    let d = duration as usize;
    input
        .domains
        .iter()
        .map(|domain| domain.excess_energy[..d].iter().all(|r| *r > 0.0))
        .collect()
}

/// Drops clients with zero utility, clients in filtered-out domains and
/// clients whose optimistic per-timestep budget cannot reach their minimum
/// batches within the candidate duration.
pub fn filter_clients(input: &SelectionInput, surviving: &[bool], duration: u32) -> Vec<bool> {
    let d = duration as usize;
    input
        .clients
        .iter()
        .map(|client| {
            if !surviving[client.domain] || client.utility <= 0.0 {
                return false;
            }
            let energy = &input.domains[client.domain].excess_energy;
            let mut budget = 0.0;
            for t in 0..d {
                let powered = if energy[t].is_infinite() {
                    client.spare_capacity[t] as f64
                } else {
                    (energy[t] / client.energy_per_batch).min(client.spare_capacity[t] as f64)
                };
                budget += powered;
            }
            budget >= client.min_batches as f64
        })
        .collect()
}

fn feasible_at(input: &SelectionInput, duration: u32, opts: &SelectOptions) -> Option<RoundPlan> {
    let surviving = filter_power_domains(input, duration);
    if !surviving.iter().any(|s| *s) {
        return None;
    }
    let eligible = filter_clients(input, &surviving, duration);
    let count = eligible.iter().filter(|e| **e).count();
    if count < input.clients_per_round as usize {
        return None;
    }
    let solution = solve_selection_mip(
        input,
        &surviving,
        &eligible,
        duration,
        input.clients_per_round,
        &opts.limits,
        opts.parallel,
    )?;
    Some(plan_from_solution(input, duration, solution))
}

fn plan_from_solution(input: &SelectionInput, duration: u32, solution: MipSolution) -> RoundPlan {
    let mut selected = Vec::with_capacity(solution.assignments.len());
    let mut expected_batches = BTreeMap::new();
    for (client, batches) in solution.assignments {
        let id = input.clients[client].id.clone();
        selected.push(id.clone());
        expected_batches.insert(id, batches);
    }
    RoundPlan {
        duration,
        selected,
        expected_batches,
        objective: solution.objective,
    }
}

/// Length of the leading all-positive prefix of a domain's forecast,
/// capped at `d_max`. The domain survives the duration filter exactly for
/// durations up to this limit.
fn survival_limits(input: &SelectionInput) -> Vec<u32> {
    let d_max = input.max_duration as usize;
    input
        .domains
        .iter()
        .map(|domain| {
            let mut limit = 0u32;
            for r in &domain.excess_energy[..d_max] {
                if *r > 0.0 {
                    limit += 1;
                } else {
                    break;
                }
            }
            limit
        })
        .collect()
}

/// Finds the minimal feasible round duration and its plan. Returns the same
/// duration as a linear scan over `d = 1..=d_max`.
pub fn duration_search(input: &SelectionInput, opts: &SelectOptions) -> Option<(u32, RoundPlan)> {
    match opts.mode {
        DurationSearchMode::Linear => {
            for d in 1..=input.max_duration {
                if let Some(plan) = feasible_at(input, d, opts) {
                    return Some((d, plan));
                }
            }
            None
        }
        DurationSearchMode::Binary => {
            let mut breakpoints: Vec<u32> = survival_limits(input)
                .into_iter()
                .filter(|limit| *limit >= 1)
                .collect();
            breakpoints.sort_unstable();
            breakpoints.dedup();
            let mut lo = 1u32;
            for hi in breakpoints {
                if hi < lo {
                    continue;
                }
                if let Some(found) = probe_segment(input, opts, lo, hi) {
                    return Some(found);
                }
                lo = hi + 1;
            }
            None
        }
    }
}

/// Gallop plus bisect inside one segment of constant domain survival, where
/// feasibility is monotone in the duration.
fn probe_segment(
    input: &SelectionInput,
    opts: &SelectOptions,
    lo: u32,
    hi: u32,
) -> Option<(u32, RoundPlan)> {
    let mut step = 1u32;
    let mut last_infeasible = lo - 1;
    let mut probe = lo;
    let (mut feasible_d, mut plan) = loop {
        if let Some(plan) = feasible_at(input, probe, opts) {
            break (probe, plan);
        }
        if probe >= hi {
            return None;
        }
        last_infeasible = probe;
        probe = probe.saturating_add(step).min(hi);
        step = step.saturating_mul(2);
    };
    let mut lo2 = last_infeasible + 1;
    while lo2 < feasible_d {
        let mid = lo2 + (feasible_d - lo2) / 2;
        if let Some(p) = feasible_at(input, mid, opts) {
            feasible_d = mid;
            plan = p;
        } else {
            lo2 = mid + 1;
        }
    }
    Some((feasible_d, plan))
}

/// Selects clients and the round duration, or reports that no feasible
/// selection exists within the maximum duration.
pub fn select_round(input: &SelectionInput, opts: &SelectOptions) -> SelectionOutcome {
    debug_assert!(input.validate().is_ok());
    match duration_search(input, opts) {
        Some((_, plan)) => SelectionOutcome::Selected(plan),
        None => SelectionOutcome::NoFeasibleSelection,
    }
}

pub fn select_round_default(input: &SelectionInput) -> SelectionOutcome {
    select_round(input, &SelectOptions::default())
}

/// Renders the program for one duration in LP text format, for debugging
/// with external tooling.
pub fn lp_string(input: &SelectionInput, duration: u32) -> String {
    let d = duration as usize;
    let surviving = filter_power_domains(input, duration);
    let eligible = filter_clients(input, &surviving, duration);
    let mut out = String::new();
    let _ = writeln!(out, "\\ selection program, duration {duration}");
    out.push_str("Maximize\n obj:");
    let mut first = true;
    for (c, client) in input.clients.iter().enumerate() {
        if !eligible[c] {
            continue;
        }
        for t in 0..d {
            if first {
                let _ = write!(out, " {} m_{c}_{t}", client.utility);
                first = false;
            } else {
                let _ = write!(out, " + {} m_{c}_{t}", client.utility);
            }
        }
    }
    out.push_str("\nSubject To\n");
    for (c, client) in input.clients.iter().enumerate() {
        if !eligible[c] {
            continue;
        }
        let terms: Vec<String> = (0..d).map(|t| format!("m_{c}_{t}")).collect();
        let sum = terms.join(" + ");
        let _ = writeln!(out, " min_{c}: {sum} - {} b_{c} >= 0", client.min_batches);
        let _ = writeln!(out, " max_{c}: {sum} - {} b_{c} <= 0", client.max_batches);
    }
    for (p, domain) in input.domains.iter().enumerate() {
        if !surviving[p] {
            continue;
        }
        for t in 0..d {
            let mut terms = Vec::new();
            for (c, client) in input.clients.iter().enumerate() {
                if eligible[c] && client.domain == p {
                    terms.push(format!("{} m_{c}_{t}", client.energy_per_batch));
                }
            }
            if !terms.is_empty() {
                let _ = writeln!(
                    out,
                    " energy_{p}_{t}: {} <= {}",
                    terms.join(" + "),
                    domain.excess_energy[t]
                );
            }
        }
    }
    let count_terms: Vec<String> = input
        .clients
        .iter()
        .enumerate()
        .filter(|(c, _)| eligible[*c])
        .map(|(c, _)| format!("b_{c}"))
        .collect();
    let _ = writeln!(
        out,
        " count: {} = {}",
        count_terms.join(" + "),
        input.clients_per_round
    );
    out.push_str("Bounds\n");
    for (c, client) in input.clients.iter().enumerate() {
        if !eligible[c] {
            continue;
        }
        for t in 0..d {
            let _ = writeln!(out, " 0 <= m_{c}_{t} <= {}", client.spare_capacity[t]);
        }
    }
    out.push_str("General\n");
    for (c, _) in input.clients.iter().enumerate().filter(|(c, _)| eligible[*c]) {
        for t in 0..d {
            let _ = writeln!(out, " m_{c}_{t}");
        }
    }
    out.push_str("Binaries\n");
    for (c, _) in input.clients.iter().enumerate().filter(|(c, _)| eligible[*c]) {
        let _ = writeln!(out, " b_{c}");
    }
    out.push_str("End\n");
    out
}
