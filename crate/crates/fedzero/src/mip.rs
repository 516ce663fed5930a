//! Exact solver for the per-round selection program.
//!
//! The program selects exactly `n` clients and an integer batch schedule
//! maximizing utility-weighted batch totals, subject to per-client round
//! bounds, per-client spare capacity and shared per-domain per-timestep
//! energy budgets. The only constraint coupling domains is the global
//! selection count, so the solver decomposes the problem:
//!
//! 1. per power domain, a branch-and-bound over client subsets computes the
//!    best achievable value for every selection count `k`;
//! 2. a dynamic program combines the per-domain tables into the optimal
//!    split of the `n` slots across domains.
//!
//! Leaf subproblems (fixed client subset in one domain) are solved by a
//! two-pass greedy fill certified against an upper bound; when the bound
//! does not close and the instance is small, a complete enumeration over
//! batch totals with an exact split-feasibility search settles optimality.
//! Large uncertified leaves keep the greedy incumbent, mirroring a MIP
//! solver returning its best incumbent at the effort limit.
//!
//! Ties between equal-objective optima are broken towards the
//! lexicographically smallest selected client set. All search orders are
//! deterministic, so results do not depend on thread scheduling.

use std::time::{Duration, Instant};

use crate::par::{self, Parallelism};
use crate::selection::SelectionInput;

/// Effort limits for one `solve_selection_mip` call. The node budget applies
/// per power domain and is deterministic; the wall-clock limit is a safety
/// net for pathological instances and is generous enough to stay untouched
/// in normal operation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverLimits {
    pub node_budget: u64,
    pub time_limit: Option<Duration>,
}

impl Default for SolverLimits {
    fn default() -> Self {
        SolverLimits {
            node_budget: 200_000,
            time_limit: Some(Duration::from_secs(30)),
        }
    }
}

/// Optimal (or best incumbent) assignment for one duration.
#[derive(Debug, Clone)]
pub struct MipSolution {
    /// Utility-weighted batch total, summed in client index order.
    pub objective: f64,
    /// `(client index, batches per timestep)` for selected clients,
    /// ascending by client index. Unselected clients compute nothing.
    pub assignments: Vec<(usize, Vec<u32>)>,
    /// Whether every explored subproblem was solved to proven optimality.
    pub certified: bool,
}

struct NodeBudget {
    remaining: u64,
    deadline: Option<Instant>,
    exhausted: bool,
}

impl NodeBudget {
    fn new(limits: &SolverLimits) -> Self {
        NodeBudget {
            remaining: limits.node_budget,
            deadline: limits.time_limit.map(|t| Instant::now() + t),
            exhausted: false,
        }
    }

    /// Registers one unit of work; returns false once the budget is spent.
    fn spend(&mut self) -> bool {
        if self.exhausted {
            return false;
        }
        if self.remaining == 0 {
            self.exhausted = true;
            return false;
        }
        self.remaining -= 1;
        // Check the deadline rarely; Instant::now is not free.
        if self.remaining % 4096 == 0 {
            if let Some(deadline) = self.deadline {
                if Instant::now() >= deadline {
                    self.exhausted = true;
                    return false;
                }
            }
        }
        true
    }
}

struct DomainCandidate {
    client: usize,
    sigma: f64,
    delta: f64,
    ratio: f64,
    min_batches: u32,
    max_batches: u32,
    /// Per-timestep batch cap assuming the full energy budget: the client
    /// can never exceed it in any assignment.
    solo_cap: Vec<u32>,
    /// `suffix_cap[t]` = sum of `solo_cap[t..]`; length `d + 1`.
    suffix_cap: Vec<u64>,
    /// Achievable batch total upper bound.
    cap_total: u32,
    spare: Vec<u32>,
    /// `sigma * cap_total`.
    ub: f64,
}

#[derive(Debug, Clone)]
struct DomainBest {
    value: f64,
    /// Global client indices, ascending.
    clients: Vec<usize>,
    batches: Vec<Vec<u32>>,
    exact: bool,
}

fn batches_affordable(energy: f64, delta: f64) -> u32 {
    if energy <= 0.0 {
        return 0;
    }
    if energy.is_infinite() {
        return u32::MAX;
    }
    let q = energy / delta + 1e-9;
    if q >= u32::MAX as f64 {
        u32::MAX
    } else {
        q.floor() as u32
    }
}

fn build_candidates(
    input: &SelectionInput,
    clients: &[usize],
    energy: &[f64],
    d: usize,
) -> Vec<DomainCandidate> {
    let mut out = Vec::with_capacity(clients.len());
    for &client in clients {
        let spec = &input.clients[client];
        let delta = spec.energy_per_batch;
        let spare: Vec<u32> = spec.spare_capacity[..d].to_vec();
        let solo_cap: Vec<u32> = (0..d)
            .map(|t| spare[t].min(batches_affordable(energy[t], delta)))
            .collect();
        let mut suffix_cap = vec![0u64; d + 1];
        for t in (0..d).rev() {
            suffix_cap[t] = suffix_cap[t + 1] + solo_cap[t] as u64;
        }
        let cap_total = (suffix_cap[0].min(spec.max_batches as u64)) as u32;
        if cap_total < spec.min_batches {
            continue; // cannot reach its minimum even with the whole budget
        }
        out.push(DomainCandidate {
            client,
            sigma: spec.utility,
            delta,
            ratio: spec.utility / delta,
            min_batches: spec.min_batches,
            max_batches: spec.max_batches,
            solo_cap,
            suffix_cap,
            cap_total,
            spare,
            ub: spec.utility * cap_total as f64,
        });
    }
    // Most attractive first; ties by client index for determinism.
    out.sort_by(|a, b| {
        b.ub.total_cmp(&a.ub)
            .then_with(|| a.client.cmp(&b.client))
    });
    out
}

struct InnerSolution {
    value: f64,
    /// Candidate positions, ascending by global client index.
    order: Vec<usize>,
    alloc: Vec<Vec<u32>>,
    exact: bool,
}

/// Exact split-feasibility: can each chosen client reach exactly its target
/// batch total under shared energy and spare capacity? Depth-first over
/// timesteps with forced lower bounds from remaining future capacity.
fn achieve_targets(
    order: &[usize],
    targets: &[u32],
    candidates: &[DomainCandidate],
    energy: &[f64],
    d: usize,
    budget: &mut NodeBudget,
) -> Option<Vec<Vec<u32>>> {
    let s = order.len();
    let mut alloc = vec![vec![0u32; d]; s];
    let mut residual: Vec<u32> = targets.to_vec();

    fn dfs(
        t: usize,
        c: usize,
        energy_left: f64,
        d: usize,
        order: &[usize],
        candidates: &[DomainCandidate],
        energy: &[f64],
        alloc: &mut Vec<Vec<u32>>,
        residual: &mut Vec<u32>,
        budget: &mut NodeBudget,
    ) -> bool {
        if c == order.len() {
            let next = t + 1;
            if next == d {
                return residual.iter().all(|r| *r == 0);
            }
            return dfs(
                next, 0, energy[next], d, order, candidates, energy, alloc, residual, budget,
            );
        }
        if !budget.spend() {
            return false;
        }
        let cand = &candidates[order[c]];
        let future = cand.suffix_cap[t + 1];
        let need = residual[c];
        let lower = (need as u64).saturating_sub(future) as u32;
        let upper = need
            .min(cand.solo_cap[t])
            .min(batches_affordable(energy_left, cand.delta));
        if lower > upper {
            return false;
        }
        // Max-first descent reaches a feasible split quickly when one exists.
        let mut take = upper;
        loop {
            alloc[c][t] = take;
            residual[c] = need - take;
            let spent = take as f64 * cand.delta;
            if dfs(
                t,
                c + 1,
                energy_left - spent,
                d,
                order,
                candidates,
                energy,
                alloc,
                residual,
                budget,
            ) {
                return true;
            }
            if take == lower {
                break;
            }
            take -= 1;
        }
        alloc[c][t] = 0;
        residual[c] = need;
        false
    }

    if d == 0 {
        return if residual.iter().all(|r| *r == 0) {
            Some(alloc)
        } else {
            None
        };
    }
    if dfs(
        0,
        0,
        energy[0],
        d,
        order,
        candidates,
        energy,
        &mut alloc,
        &mut residual,
        budget,
    ) {
        Some(alloc)
    } else {
        None
    }
}

/// Greedy max-fill of leftover energy towards each client's maximum,
/// highest utility-per-energy first.
fn max_fill(
    order: &[usize],
    candidates: &[DomainCandidate],
    energy: &[f64],
    d: usize,
    alloc: &mut [Vec<u32>],
    total: &mut [u32],
) {
    let mut by_ratio: Vec<usize> = (0..order.len()).collect();
    by_ratio.sort_by(|a, b| {
        candidates[order[*b]]
            .ratio
            .total_cmp(&candidates[order[*a]].ratio)
            .then_with(|| candidates[order[*a]].client.cmp(&candidates[order[*b]].client))
    });
    for t in 0..d {
        let mut left = energy[t];
        for i in 0..order.len() {
            left -= alloc[i][t] as f64 * candidates[order[i]].delta;
        }
        if left <= 0.0 {
            continue;
        }
        for &i in &by_ratio {
            let cand = &candidates[order[i]];
            let headroom = cand.max_batches - total[i];
            let room = cand.spare[t] - alloc[i][t];
            let take = headroom.min(room).min(batches_affordable(left, cand.delta));
            if take > 0 {
                alloc[i][t] += take;
                total[i] += take;
                left -= take as f64 * cand.delta;
            }
        }
    }
}

fn inner_solve(
    chosen: &[usize],
    candidates: &[DomainCandidate],
    energy: &[f64],
    d: usize,
    budget: &mut NodeBudget,
) -> Option<InnerSolution> {
    let mut order: Vec<usize> = chosen.to_vec();
    order.sort_by_key(|pos| candidates[*pos].client);
    let s = order.len();

    let mut alloc = vec![vec![0u32; d]; s];
    let mut total = vec![0u32; s];

    // Pass 1 per timestep: fill minimums, most urgent first. Urgency is the
    // shortfall that remaining future capacity cannot cover.
    for t in 0..d {
        let mut left = energy[t];
        let mut below: Vec<usize> = (0..s)
            .filter(|i| total[*i] < candidates[order[*i]].min_batches)
            .collect();
        below.sort_by_key(|i| {
            let cand = &candidates[order[*i]];
            let need = (cand.min_batches - total[*i]) as i64;
            let future = cand.suffix_cap[t + 1] as i64;
            (-(need - future), *i)
        });
        for i in below {
            let cand = &candidates[order[i]];
            let need = cand.min_batches - total[i];
            let take = need
                .min(cand.spare[t])
                .min(batches_affordable(left, cand.delta));
            if take > 0 {
                alloc[i][t] = take;
                total[i] += take;
                left -= take as f64 * cand.delta;
            }
        }
    }
    let greedy_feasible = (0..s).all(|i| total[i] >= candidates[order[i]].min_batches);
    if !greedy_feasible {
        // The myopic fill can strand a client; settle feasibility exactly.
        let targets: Vec<u32> = order.iter().map(|pos| candidates[*pos].min_batches).collect();
        match achieve_targets(&order, &targets, candidates, energy, d, budget) {
            Some(base) => {
                alloc = base;
                for i in 0..s {
                    total[i] = targets[i];
                }
            }
            None => return None,
        }
    }
    max_fill(&order, candidates, energy, d, &mut alloc, &mut total);

    let value = |totals: &[u32]| -> f64 {
        (0..s)
            .map(|i| candidates[order[i]].sigma * totals[i] as f64)
            .sum()
    };
    let mut best_value = value(&total);

    // Upper bounds: independent per-client caps and the per-timestep
    // fractional knapsack relaxation (each valid on its own).
    let ub_cap: f64 = order.iter().map(|pos| candidates[*pos].ub).sum();
    let mut by_ratio: Vec<usize> = (0..s).collect();
    by_ratio.sort_by(|a, b| {
        candidates[order[*b]]
            .ratio
            .total_cmp(&candidates[order[*a]].ratio)
    });
    let mut ub_knap = 0.0;
    for t in 0..d {
        let mut remaining = energy[t];
        for &i in &by_ratio {
            if remaining <= 0.0 {
                break;
            }
            let cand = &candidates[order[i]];
            let chunk = cand.delta * cand.spare[t] as f64;
            let take = chunk.min(remaining);
            ub_knap += cand.ratio * take;
            remaining -= take;
        }
    }
    let ub = ub_cap.min(ub_knap);
    let mut exact = best_value >= ub;

    if !exact {
        let mut space: u128 = 1;
        for pos in &order {
            let cand = &candidates[*pos];
            space = space.saturating_mul((cand.cap_total - cand.min_batches + 1) as u128);
        }
        if s <= 5 && d <= 16 && space <= 20_000 {
            // Complete search over batch totals, best value first.
            let mut combos: Vec<Vec<u32>> = Vec::with_capacity(space as usize);
            let mut current = vec![0u32; s];
            fn generate(
                i: usize,
                order: &[usize],
                candidates: &[DomainCandidate],
                current: &mut Vec<u32>,
                out: &mut Vec<Vec<u32>>,
            ) {
                if i == order.len() {
                    out.push(current.clone());
                    return;
                }
                let cand = &candidates[order[i]];
                for x in cand.min_batches..=cand.cap_total {
                    current[i] = x;
                    generate(i + 1, order, candidates, current, out);
                }
            }
            generate(0, &order, candidates, &mut current, &mut combos);
            combos.sort_by(|a, b| value(b).total_cmp(&value(a)).then_with(|| a.cmp(b)));
            exact = true;
            for combo in &combos {
                let combo_value = value(combo);
                if combo_value <= best_value {
                    break; // incumbent already optimal
                }
                if let Some(found) =
                    achieve_targets(&order, combo, candidates, energy, d, budget)
                {
                    alloc = found;
                    best_value = combo_value;
                    break;
                }
                if budget.exhausted {
                    exact = false;
                    break;
                }
            }
        }
    }

    Some(InnerSolution {
        value: best_value,
        order,
        alloc,
        exact,
    })
}

struct SubsetSearch<'a> {
    candidates: &'a [DomainCandidate],
    energy: &'a [f64],
    d: usize,
    k: usize,
    prefix_ub: &'a [f64],
    best: Option<DomainBest>,
}

impl<'a> SubsetSearch<'a> {
    fn leaf(&mut self, chosen: &[usize], budget: &mut NodeBudget) {
        let Some(solution) = inner_solve(chosen, self.candidates, self.energy, self.d, budget)
        else {
            return;
        };
        let clients: Vec<usize> = solution
            .order
            .iter()
            .map(|pos| self.candidates[*pos].client)
            .collect();
        let replace = match &self.best {
            None => true,
            Some(best) => {
                solution.value > best.value
                    || (solution.value == best.value && clients < best.clients)
            }
        };
        if replace {
            self.best = Some(DomainBest {
                value: solution.value,
                clients,
                batches: solution.alloc,
                exact: solution.exact,
            });
        }
    }

    fn dfs(&mut self, pos: usize, chosen: &mut Vec<usize>, chosen_ub: f64, budget: &mut NodeBudget) {
        if chosen.len() == self.k {
            self.leaf(chosen, budget);
            return;
        }
        if !budget.spend() {
            return;
        }
        let need = self.k - chosen.len();
        if pos + need > self.candidates.len() {
            return;
        }
        let bound = chosen_ub + (self.prefix_ub[pos + need] - self.prefix_ub[pos]);
        if let Some(best) = &self.best {
            // Strict comparison keeps equal-value subsets alive for the
            // lexicographic tie-break.
            if bound < best.value {
                return;
            }
        }
        chosen.push(pos);
        self.dfs(pos + 1, chosen, chosen_ub + self.candidates[pos].ub, budget);
        chosen.pop();
        self.dfs(pos + 1, chosen, chosen_ub, budget);
    }
}

/// Best value and assignment for selecting exactly `k` clients in one
/// domain, for every `k` up to `k_max`.
fn domain_table(
    candidates: &[DomainCandidate],
    energy: &[f64],
    d: usize,
    k_max: usize,
    limits: &SolverLimits,
) -> Vec<Option<DomainBest>> {
    let mut prefix_ub = vec![0.0; candidates.len() + 1];
    for (i, cand) in candidates.iter().enumerate() {
        prefix_ub[i + 1] = prefix_ub[i] + cand.ub;
    }
    let mut budget = NodeBudget::new(limits);
    let mut table: Vec<Option<DomainBest>> = Vec::with_capacity(k_max + 1);
    table.push(Some(DomainBest {
        value: 0.0,
        clients: Vec::new(),
        batches: Vec::new(),
        exact: true,
    }));
    for k in 1..=k_max {
        if k > candidates.len() {
            table.push(None);
            continue;
        }
        let mut search = SubsetSearch {
            candidates,
            energy,
            d,
            k,
            prefix_ub: &prefix_ub,
            best: None,
        };
        let mut chosen = Vec::with_capacity(k);
        search.dfs(0, &mut chosen, 0.0, &mut budget);
        table.push(search.best);
    }
    table
}

/// Solves the selection program for the given duration. `surviving` and
/// `eligible` are the pre-filter masks over domains and clients. Returns
/// `None` when no assignment selects exactly `clients_to_select` clients
/// within all constraints.
pub fn solve_selection_mip(
    input: &SelectionInput,
    surviving: &[bool],
    eligible: &[bool],
    duration: u32,
    clients_to_select: u32,
    limits: &SolverLimits,
    parallel: Parallelism,
) -> Option<MipSolution> {
    let d = duration as usize;
    let n = clients_to_select as usize;
    assert!(n >= 1);

    let mut domain_members: Vec<Vec<usize>> = vec![Vec::new(); input.domains.len()];
    for (idx, client) in input.clients.iter().enumerate() {
        if eligible[idx] && surviving[client.domain] {
            domain_members[client.domain].push(idx);
        }
    }
    let jobs: Vec<(usize, Vec<usize>)> = domain_members
        .into_iter()
        .enumerate()
        .filter(|(_, members)| !members.is_empty())
        .collect();

    let tables: Vec<Vec<Option<DomainBest>>> = par::indexed_map(&jobs, parallel, 16, |_, job| {
        let (domain, members) = job;
        let energy = &input.domains[*domain].excess_energy[..d];
        let candidates = build_candidates(input, members, energy, d);
        let k_max = n.min(candidates.len());
        domain_table(&candidates, energy, d, k_max, limits)
    });

    #[derive(Clone)]
    struct Cell {
        value: f64,
        clients: Vec<usize>,
        picks: Vec<(usize, usize)>,
    }

    let mut dp: Vec<Option<Cell>> = vec![None; n + 1];
    dp[0] = Some(Cell {
        value: 0.0,
        clients: Vec::new(),
        picks: Vec::new(),
    });
    for (job_idx, table) in tables.iter().enumerate() {
        let mut next = dp.clone();
        for j in 0..=n {
            let Some(cell) = &dp[j] else { continue };
            for (k, entry) in table.iter().enumerate().skip(1) {
                let Some(best) = entry else { continue };
                let jj = j + k;
                if jj > n {
                    break;
                }
                let value = cell.value + best.value;
                let replace = match &next[jj] {
                    None => true,
                    Some(existing) => {
                        if value != existing.value {
                            value > existing.value
                        } else {
                            let mut merged = cell.clients.clone();
                            merged.extend_from_slice(&best.clients);
                            merged.sort_unstable();
                            merged < existing.clients
                        }
                    }
                };
                if replace {
                    let mut merged = cell.clients.clone();
                    merged.extend_from_slice(&best.clients);
                    merged.sort_unstable();
                    let mut picks = cell.picks.clone();
                    picks.push((job_idx, k));
                    next[jj] = Some(Cell {
                        value,
                        clients: merged,
                        picks,
                    });
                }
            }
        }
        dp = next;
    }

    let cell = dp.into_iter().nth(n).flatten()?;
    let mut assignments: Vec<(usize, Vec<u32>)> = Vec::with_capacity(n);
    let mut certified = true;
    for (job_idx, k) in &cell.picks {
        let best = tables[*job_idx][*k].as_ref().expect("pick points at entry");
        certified &= best.exact;
        for (client, batches) in best.clients.iter().zip(&best.batches) {
            assignments.push((*client, batches.clone()));
        }
    }
    assignments.sort_by_key(|(client, _)| *client);
    let objective = assignments
        .iter()
        .map(|(client, batches)| {
            input.clients[*client].utility * batches.iter().map(|b| *b as f64).sum::<f64>()
        })
        .sum();
    Some(MipSolution {
        objective,
        assignments,
        certified,
    })
}
