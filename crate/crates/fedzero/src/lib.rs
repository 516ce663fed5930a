//! Trace-driven simulator and scheduling library for synchronous federated
//! learning restricted to renewable excess energy and spare compute
//! capacity.
//!
//! The crate models a fleet of clients grouped into power domains that
//! share per-timestep excess-energy budgets. Client selection combines an
//! iterative round-duration search with an exact integer program over
//! selection and batch schedules, weighted by statistical utility and kept
//! fair by a participation blocklist. Rounds execute reactively against
//! actual traces with two-step power attribution inside each domain.
//! Baseline strategies (random, Oort-style guided selection, over-selection
//! and forecast-filtered variants, and an unconstrained upper bound) run
//! behind the same harness for comparison.
//!
//! Batch work (per-domain solver subproblems, experiment batches) runs on
//! a rayon pool when the `parallel` feature (default) is enabled; the
//! sequential fallback produces identical results.

pub mod config;
pub mod fairness;
pub mod forecast;
pub mod harness;
pub mod metrics;
pub mod mip;
mod par;
pub mod proxy;
pub mod runtime;
pub mod scenario;
pub mod selection;
pub mod strategies;
pub mod synth;
pub mod trace;

pub use config::{BuildError, ScenarioFile};
pub use fairness::{release_probability, statistical_utility, FairnessLedger};
pub use forecast::{ForecastKind, ForecastModel, ResourceProviders};
pub use harness::{
    imbalanced_scenario, profile_selection, run_experiment, run_experiment_batch,
    ExperimentConfig, ProfileSpec,
};
pub use metrics::ExperimentMetrics;
pub use par::Parallelism;
pub use scenario::{
    validate_scenario, ClientId, ClientSpec, DomainId, PowerDomain, Scenario, SimulationParams,
};
pub use selection::{
    duration_search, filter_clients, filter_power_domains, select_round, DurationSearchMode,
    RoundPlan, SelectOptions, SelectionInput, SelectionOutcome,
};
pub use strategies::StrategyKind;
pub use trace::{TraceError, TraceSeries};
