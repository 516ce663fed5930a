//! Client selection strategies: the forecast-driven planner plus the
//! comparison baselines behind one dispatch surface.
//!
//! Baselines never look at future actual traces. Random and Oort variants
//! check instantaneous availability (actual excess energy and spare
//! capacity at the selection timestep); the `fc` variants additionally
//! filter on forecasts; the `1_3n` variants over-select and wait only for
//! the first `n` responses. The upper bound ignores resource constraints
//! entirely and serves as the relaxation reference.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::fairness::FairnessLedger;
use crate::forecast::ResourceProviders;
use crate::scenario::Scenario;
use crate::selection::{
    select_round, CandidateClient, DomainForecast, RoundPlan, SelectOptions, SelectionInput,
    SelectionOutcome,
};
use crate::trace::TraceError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StrategyKind {
    Fedzero,
    Random,
    Random13n,
    RandomFc,
    Oort,
    Oort13n,
    OortFc,
    UpperBound,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 8] = [
        StrategyKind::Fedzero,
        StrategyKind::Random,
        StrategyKind::Random13n,
        StrategyKind::RandomFc,
        StrategyKind::Oort,
        StrategyKind::Oort13n,
        StrategyKind::OortFc,
        StrategyKind::UpperBound,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Fedzero => "fedzero",
            StrategyKind::Random => "random",
            StrategyKind::Random13n => "random_1_3n",
            StrategyKind::RandomFc => "random_fc",
            StrategyKind::Oort => "oort",
            StrategyKind::Oort13n => "oort_1_3n",
            StrategyKind::OortFc => "oort_fc",
            StrategyKind::UpperBound => "upper_bound",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    /// Whether runtime energy and capacity limits apply.
    pub fn is_constrained(self) -> bool {
        self != StrategyKind::UpperBound
    }

    /// Whether accepted clients enter the participation blocklist.
    pub fn uses_blocklist(self) -> bool {
        self == StrategyKind::Fedzero
    }

    fn over_selects(self) -> bool {
        matches!(self, StrategyKind::Random13n | StrategyKind::Oort13n)
    }

    fn uses_forecast_filter(self) -> bool {
        matches!(self, StrategyKind::RandomFc | StrategyKind::OortFc)
    }

    fn is_oort(self) -> bool {
        matches!(
            self,
            StrategyKind::Oort | StrategyKind::Oort13n | StrategyKind::OortFc
        )
    }
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyKind::from_name(s).ok_or_else(|| {
            let names: Vec<&str> = StrategyKind::ALL.iter().map(|k| k.name()).collect();
            format!("unknown strategy {s:?}; expected one of {}", names.join(", "))
        })
    }
}

/// Shared read view for one selection attempt.
pub struct StrategyRuntime<'a> {
    pub scenario: &'a Scenario,
    pub providers: &'a ResourceProviders,
    pub ledger: &'a FairnessLedger,
}

/// What the strategy wants to do at this timestep.
#[derive(Debug, Clone)]
pub enum StrategyDecision {
    Run {
        /// Scenario client indices, ascending.
        participants: Vec<usize>,
        /// Round ends once this many participants reached their minimum.
        wait_for: usize,
        /// Planned schedule, for strategies that produce one.
        plan: Option<RoundPlan>,
    },
    Wait,
}

/// Clients that currently have access to excess energy and spare capacity
/// (instantaneous check on actual values at `t0`).
pub fn available_clients(rt: &StrategyRuntime, t0: u64) -> Result<Vec<usize>, TraceError> {
    let mut out = Vec::new();
    let mut domain_energy = vec![None; rt.scenario.domains.len()];
    for (idx, _) in rt.scenario.clients.iter().enumerate() {
        let domain = rt.scenario.domain_of(idx);
        let energy = match domain_energy[domain] {
            Some(e) => e,
            None => {
                let e = rt.providers.actual_excess_energy(domain, t0)?;
                domain_energy[domain] = Some(e);
                e
            }
        };
        if energy > 0.0 && rt.providers.actual_spare_capacity(idx, t0)? > 0 {
            out.push(idx);
        }
    }
    Ok(out)
}

/// Forecast-based filter: keeps clients expected to reach their minimum
/// batches within the maximum round duration.
pub fn fc_filter(rt: &StrategyRuntime, clients: &[usize], t0: u64) -> Result<Vec<usize>, TraceError> {
    let d_max = rt.scenario.params.max_round_duration;
    let mut domain_forecast: Vec<Option<Vec<f64>>> = vec![None; rt.scenario.domains.len()];
    let mut out = Vec::new();
    for &idx in clients {
        let spec = &rt.scenario.clients[idx];
        let domain = rt.scenario.domain_of(idx);
        if domain_forecast[domain].is_none() {
            domain_forecast[domain] = Some(rt.providers.excess_energy_forecast(domain, t0, d_max)?);
        }
        let energy = domain_forecast[domain].as_ref().unwrap();
        let spare = rt.providers.spare_capacity_forecast(idx, t0, d_max)?;
        let mut budget = 0.0;
        for t in 0..d_max as usize {
            let powered = if energy[t].is_infinite() {
                spare[t] as f64
            } else {
                (energy[t] / spec.energy_per_batch).min(spare[t] as f64)
            };
            budget += powered;
        }
        if budget >= spec.min_batches as f64 {
            out.push(idx);
        }
    }
    Ok(out)
}

/// Uniform sample of `k` clients; selects everyone when fewer are available.
pub fn random_select<R: Rng + ?Sized>(available: &[usize], k: usize, rng: &mut R) -> Vec<usize> {
    if available.len() <= k {
        return available.to_vec();
    }
    let mut pool = available.to_vec();
    pool.shuffle(rng);
    let mut picked: Vec<usize> = pool.into_iter().take(k).collect();
    picked.sort_unstable();
    picked
}

/// Oort utility: statistical utility times a system factor derived from the
/// client's currently powered capacity.
pub fn oort_utility(rt: &StrategyRuntime, client: usize, t0: u64) -> Result<f64, TraceError> {
    let spec = &rt.scenario.clients[client];
    let domain = rt.scenario.domain_of(client);
    let energy = rt.providers.actual_excess_energy(domain, t0)?;
    let spare = rt.providers.actual_spare_capacity(client, t0)? as f64;
    let powered = if energy.is_infinite() {
        spare
    } else {
        spare.min(energy / spec.energy_per_batch)
    };
    let system = powered / spec.max_capacity as f64;
    Ok(rt.ledger.utility_ignoring_blocklist(client) * system)
}

/// Guided selection: exploit the top clients by Oort utility, reserve an
/// exploration fraction for clients that never participated. Clients with
/// zero utility are never exploited.
pub fn oort_select<R: Rng + ?Sized>(
    rt: &StrategyRuntime,
    available: &[usize],
    k: usize,
    t0: u64,
    rng: &mut R,
) -> Result<Vec<usize>, TraceError> {
    let mut newcomers = Vec::new();
    let mut veterans = Vec::new();
    for &idx in available {
        if rt.ledger.state(idx).rounds_participated == 0 {
            newcomers.push(idx);
        } else {
            let utility = oort_utility(rt, idx, t0)?;
            if utility > 0.0 {
                veterans.push((idx, utility));
            }
        }
    }
    // Random order first so equal utilities reduce to a random choice.
    veterans.shuffle(rng);
    veterans.sort_by(|a, b| b.1.total_cmp(&a.1));
    newcomers.shuffle(rng);

    let explore_quota = ((rt.scenario.params.oort_exploration * k as f64).round() as usize).min(k);
    let exploit_count = (k - explore_quota.min(newcomers.len())).min(veterans.len());
    let mut picked: Vec<usize> = veterans[..exploit_count].iter().map(|(c, _)| *c).collect();
    for &idx in newcomers.iter() {
        if picked.len() >= k {
            break;
        }
        picked.push(idx);
    }
    picked.sort_unstable();
    Ok(picked)
}

/// Builds the selection program from forecasts and the fairness ledger.
pub fn build_selection_input(rt: &StrategyRuntime, t0: u64) -> Result<SelectionInput, TraceError> {
    let params = &rt.scenario.params;
    let d_max = params.max_round_duration;
    let domains = rt
        .scenario
        .domains
        .iter()
        .enumerate()
        .map(|(idx, domain)| {
            Ok(DomainForecast {
                id: domain.id.clone(),
                excess_energy: rt.providers.excess_energy_forecast(idx, t0, d_max)?,
            })
        })
        .collect::<Result<Vec<_>, TraceError>>()?;
    let clients = rt
        .scenario
        .clients
        .iter()
        .enumerate()
        .map(|(idx, spec)| {
            Ok(CandidateClient {
                id: spec.id.clone(),
                domain: rt.scenario.domain_of(idx),
                utility: rt.ledger.utility(idx),
                energy_per_batch: spec.energy_per_batch,
                min_batches: spec.min_batches,
                max_batches: spec.max_batches,
                spare_capacity: rt.providers.spare_capacity_forecast(idx, t0, d_max)?,
            })
        })
        .collect::<Result<Vec<_>, TraceError>>()?;
    Ok(SelectionInput {
        domains,
        clients,
        clients_per_round: params.clients_per_round,
        max_duration: d_max,
    })
}

/// Runs one selection attempt for the given strategy.
pub fn decide<R: Rng + ?Sized>(
    kind: StrategyKind,
    rt: &StrategyRuntime,
    t0: u64,
    opts: &SelectOptions,
    rng: &mut R,
) -> Result<StrategyDecision, TraceError> {
    let n = rt.scenario.params.clients_per_round as usize;
    match kind {
        StrategyKind::Fedzero => {
            let input = build_selection_input(rt, t0)?;
            match select_round(&input, opts) {
                SelectionOutcome::Selected(plan) => {
                    let participants: Vec<usize> = plan
                        .selected
                        .iter()
                        .map(|id| rt.scenario.client_index(id).expect("plan ids exist"))
                        .collect();
                    let wait_for = participants.len();
                    Ok(StrategyDecision::Run {
                        participants,
                        wait_for,
                        plan: Some(plan),
                    })
                }
                SelectionOutcome::NoFeasibleSelection => Ok(StrategyDecision::Wait),
            }
        }
        StrategyKind::UpperBound => {
            let pool: Vec<usize> = (0..rt.scenario.clients.len()).collect();
            let participants = random_select(&pool, n, rng);
            let wait_for = participants.len();
            Ok(StrategyDecision::Run {
                participants,
                wait_for,
                plan: None,
            })
        }
        _ => {
            let mut pool = available_clients(rt, t0)?;
            if kind.uses_forecast_filter() {
                pool = fc_filter(rt, &pool, t0)?;
            }
            let k = if kind.over_selects() {
                (rt.scenario.params.over_selection_factor * n as f64).ceil() as usize
            } else {
                n
            };
            let participants = if kind.is_oort() {
                oort_select(rt, &pool, k, t0, rng)?
            } else {
                random_select(&pool, k, rng)
            };
            if participants.is_empty() {
                return Ok(StrategyDecision::Wait);
            }
            let wait_for = if kind.over_selects() {
                n.min(participants.len())
            } else {
                participants.len()
            };
            Ok(StrategyDecision::Run {
                participants,
                wait_for,
                plan: None,
            })
        }
    }
}
