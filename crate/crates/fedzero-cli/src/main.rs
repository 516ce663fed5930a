//! Command line interface: run experiments, profile selection overhead,
//! and compile cross-run reports.

use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use fedzero::harness::{self, ExperimentConfig, ProfileSpec};
use fedzero::metrics::compile_report;
use fedzero::selection::{DurationSearchMode, SelectOptions};
use fedzero::{DomainId, Parallelism, ScenarioFile, StrategyKind};

#[derive(Parser)]
#[command(name = "fedzero", about = "Federated learning on excess energy: simulator CLI")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write metrics CSVs.
    Run {
        /// Scenario JSON file.
        #[arg(long)]
        scenario: PathBuf,
        /// Selection strategy (fedzero, random, random_1_3n, random_fc,
        /// oort, oort_1_3n, oort_fc, upper_bound).
        #[arg(long)]
        strategy: StrategyKind,
        #[arg(long)]
        seed: u64,
        /// Simulated days.
        #[arg(long)]
        days: u32,
        /// Output directory for the metrics CSVs.
        #[arg(long)]
        out: PathBuf,
        /// Give this power domain unlimited energy and capacity.
        #[arg(long)]
        privileged_domain: Option<String>,
        /// Use the linear duration scan instead of the binary search.
        #[arg(long)]
        linear_search: bool,
        /// Disable the rayon pool for this run.
        #[arg(long)]
        sequential: bool,
    },
    /// Time the selection algorithm on synthetic instance sizes.
    Profile {
        #[arg(long)]
        clients: usize,
        #[arg(long)]
        domains: usize,
        /// Forecast horizon (maximum round duration) in timesteps.
        #[arg(long)]
        horizon: u32,
        #[arg(long, default_value_t = 5)]
        trials: u32,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Optional CSV file for the per-trial rows.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compile run directories into a comparison report.
    Report {
        /// Directory containing run output directories.
        #[arg(long, name = "in")]
        in_dir: PathBuf,
        /// Output directory; defaults to the input directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Target accuracy override; defaults to the random baseline's
        /// best accuracy.
        #[arg(long)]
        target: Option<f64>,
    },
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Run {
            scenario,
            strategy,
            seed,
            days,
            out,
            privileged_domain,
            linear_search,
            sequential,
        } => {
            let file = ScenarioFile::load(&scenario)
                .with_context(|| format!("loading scenario {}", scenario.display()))?;
            let (scenario, mut providers) =
                file.build(days).context("building scenario")?;
            if let Some(domain) = privileged_domain {
                providers =
                    harness::imbalanced_scenario(&scenario, &providers, &DomainId(domain.clone()))
                        .with_context(|| format!("unknown power domain {domain:?}"))?;
            }
            let mut config = ExperimentConfig::new(strategy, days, seed);
            config.select = SelectOptions {
                mode: if linear_search {
                    DurationSearchMode::Linear
                } else {
                    DurationSearchMode::Binary
                },
                parallel: if sequential {
                    Parallelism::Sequential
                } else {
                    Parallelism::Auto
                },
                ..SelectOptions::default()
            };
            let metrics = harness::run_experiment(&scenario, &providers, &config)
                .context("running experiment")?;
            metrics.write_csvs(&out).context("writing metrics")?;
            let summary = metrics.summary();
            println!(
                "{} seed={} rounds={} best_accuracy={:.4} energy={:.2} kWh mean_round={:.1} min -> {}",
                summary.strategy,
                summary.seed,
                summary.rounds,
                summary.best_accuracy,
                summary.total_energy_kwh,
                summary.mean_round_minutes,
                out.display()
            );
            Ok(())
        }
        Command::Profile {
            clients,
            domains,
            horizon,
            trials,
            seed,
            out,
        } => {
            if clients == 0 || domains == 0 || horizon == 0 {
                bail!("clients, domains and horizon must be positive");
            }
            let report = harness::profile_selection(&ProfileSpec {
                clients,
                domains,
                horizon,
                trials,
                seed,
                parallel: Parallelism::Auto,
            });
            println!("clients,domains,horizon,trial,micros");
            for row in &report.rows {
                println!(
                    "{},{},{},{},{}",
                    row.clients, row.domains, row.horizon, row.trial, row.micros
                );
            }
            println!("median_micros: {}", report.median_micros);
            if let Some(path) = out {
                let mut writer = csv::Writer::from_path(&path)
                    .with_context(|| format!("writing {}", path.display()))?;
                for row in &report.rows {
                    writer.serialize(row)?;
                }
                writer.flush()?;
            }
            Ok(())
        }
        Command::Report { in_dir, out, target } => {
            let report = compile_report(&in_dir, target).context("compiling report")?;
            let out = out.unwrap_or_else(|| in_dir.clone());
            report.write(&out).context("writing report")?;
            println!(
                "target_accuracy={:.4}; {} runs -> {}",
                report.target_accuracy,
                report.rows.len(),
                out.display()
            );
            Ok(())
        }
    }
}
