//! Randomized equivalence checks of the selection engine against
//! exhaustive oracles, plus solver-level properties on random instances.

mod common;

use common::{oracle_select_round, oracle_solve_mip, random_instance, random_positive_instance};
use fedzero::mip::{solve_selection_mip, SolverLimits};
use fedzero::selection::{
    duration_search, select_round, DurationSearchMode, SelectOptions, SelectionOutcome,
};
use fedzero::Parallelism;

fn all_true(len: usize) -> Vec<bool> {
    vec![true; len]
}

#[test]
fn solver_matches_exhaustive_enumeration() {
    let limits = SolverLimits::default();
    for seed in 0..100u64 {
        let input = random_instance(seed);
        for d in 1..=input.max_duration {
            let oracle = oracle_solve_mip(&input, d, input.clients_per_round);
            let solved = solve_selection_mip(
                &input,
                &all_true(input.domains.len()),
                &all_true(input.clients.len()),
                d,
                input.clients_per_round,
                &limits,
                Parallelism::Sequential,
            );
            match (oracle, &solved) {
                (None, None) => {}
                (Some(expected), Some(solution)) => {
                    assert_eq!(
                        solution.objective, expected,
                        "objective mismatch on seed {seed} d {d}"
                    );
                    assert!(solution.certified, "uncertified tiny solve on seed {seed}");
                }
                (oracle, solved) => panic!(
                    "feasibility mismatch on seed {seed} d {d}: oracle {oracle:?} vs solver {}",
                    solved.is_some()
                ),
            }
        }
    }
}

#[test]
fn select_round_matches_full_oracle() {
    for seed in 200..300u64 {
        let input = random_instance(seed);
        let oracle = oracle_select_round(&input);
        match (oracle, select_round(&input, &SelectOptions::default())) {
            (None, SelectionOutcome::NoFeasibleSelection) => {}
            (Some((d, value)), SelectionOutcome::Selected(plan)) => {
                assert_eq!(plan.duration, d, "duration mismatch on seed {seed}");
                assert_eq!(plan.objective, value, "objective mismatch on seed {seed}");
                plan.check_invariants(&input)
                    .unwrap_or_else(|e| panic!("invariant violation on seed {seed}: {e}"));
            }
            (oracle, outcome) => panic!(
                "feasibility mismatch on seed {seed}: oracle {oracle:?} vs {:?}",
                outcome.plan().map(|p| p.duration)
            ),
        }
    }
}

#[test]
fn binary_and_linear_search_agree() {
    for seed in 300..400u64 {
        let input = random_instance(seed);
        let binary = duration_search(
            &input,
            &SelectOptions {
                mode: DurationSearchMode::Binary,
                ..Default::default()
            },
        );
        let linear = duration_search(
            &input,
            &SelectOptions {
                mode: DurationSearchMode::Linear,
                ..Default::default()
            },
        );
        match (binary, linear) {
            (None, None) => {}
            (Some((bd, bplan)), Some((ld, lplan))) => {
                assert_eq!(bd, ld, "duration mismatch on seed {seed}");
                assert_eq!(bplan, lplan, "plan mismatch on seed {seed}");
            }
            (b, l) => panic!(
                "feasibility mismatch on seed {seed}: binary {:?} linear {:?}",
                b.map(|x| x.0),
                l.map(|x| x.0)
            ),
        }
    }
}

#[test]
fn feasibility_is_monotone_under_all_positive_energy() {
    // With positive energy throughout, domain survival never changes and
    // growing the duration only accumulates budget.
    let opts = SelectOptions::default();
    for seed in 400..480u64 {
        let input = random_positive_instance(seed);
        let mut seen_feasible = false;
        for d in 1..=input.max_duration {
            let surviving = fedzero::filter_power_domains(&input, d);
            let eligible = fedzero::filter_clients(&input, &surviving, d);
            let count = eligible.iter().filter(|e| **e).count();
            let feasible = count >= input.clients_per_round as usize
                && solve_selection_mip(
                    &input,
                    &surviving,
                    &eligible,
                    d,
                    input.clients_per_round,
                    &opts.limits,
                    Parallelism::Sequential,
                )
                .is_some();
            if seen_feasible {
                assert!(
                    feasible,
                    "feasibility lost when growing duration to {d} on seed {seed}"
                );
            }
            seen_feasible |= feasible;
        }
    }
}

#[test]
fn scaling_utilities_preserves_the_optimal_selection() {
    // Doubling every utility is exact in floating point and must not
    // change the chosen set.
    for seed in 500..560u64 {
        let mut input = random_instance(seed);
        let base = select_round(&input, &SelectOptions::default());
        for client in &mut input.clients {
            client.utility *= 2.0;
        }
        let scaled = select_round(&input, &SelectOptions::default());
        match (base, scaled) {
            (SelectionOutcome::NoFeasibleSelection, SelectionOutcome::NoFeasibleSelection) => {}
            (SelectionOutcome::Selected(a), SelectionOutcome::Selected(b)) => {
                assert_eq!(a.selected, b.selected, "selection changed on seed {seed}");
                assert_eq!(a.duration, b.duration);
                assert_eq!(b.objective, 2.0 * a.objective);
            }
            _ => panic!("feasibility changed under scaling on seed {seed}"),
        }
    }
}

#[test]
fn parallel_and_sequential_solves_are_identical() {
    for seed in 600..640u64 {
        let input = random_instance(seed);
        let run = |parallel| {
            select_round(
                &input,
                &SelectOptions {
                    parallel,
                    ..Default::default()
                },
            )
        };
        match (run(Parallelism::Sequential), run(Parallelism::Parallel)) {
            (SelectionOutcome::NoFeasibleSelection, SelectionOutcome::NoFeasibleSelection) => {}
            (SelectionOutcome::Selected(a), SelectionOutcome::Selected(b)) => {
                assert_eq!(a, b, "parallel result differs on seed {seed}")
            }
            _ => panic!("feasibility differs between modes on seed {seed}"),
        }
    }
}

#[test]
fn every_returned_plan_satisfies_its_invariants() {
    for seed in 700..800u64 {
        let input = random_instance(seed);
        if let SelectionOutcome::Selected(plan) = select_round(&input, &SelectOptions::default()) {
            plan.check_invariants(&input)
                .unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        }
    }
}
