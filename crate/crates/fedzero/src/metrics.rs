//! Experiment metrics and their CSV schemas.
//!
//! One experiment run writes five files into its output directory:
//!
//! - `rounds.csv`: one row per executed round.
//! - `clients.csv`: per-client participation tallies.
//! - `domain_rounds.csv`: energy consumed per domain per round.
//! - `summary.csv`: one aggregate row.
//! - `timings.csv`: wall-clock selection overhead per round. This is a
//!   measurement of the host machine, not of the simulation, and is the
//!   only file exempt from byte-level reproducibility.
//!
//! `report` compiles several run directories into a comparison table plus
//! a plot-ready long-format file, using the random baseline's best
//! accuracy as the target accuracy.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("no usable run directories under {0}")]
    NoRuns(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u32,
    pub t_start: u64,
    pub duration: u32,
    pub selected: u32,
    pub accepted: u32,
    pub discarded: u32,
    pub batches: u64,
    pub energy_wmin: f64,
    pub cum_energy_wmin: f64,
    pub accuracy: f64,
    pub blocklist_size: u32,
    pub omega: f64,
    /// Simulated minutes elapsed at the end of the round.
    pub sim_minutes_end: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientTally {
    pub client_id: String,
    pub domain_id: String,
    pub selected_rounds: u32,
    pub accepted_rounds: u32,
    pub discarded_rounds: u32,
    /// All computed batches, including discarded work.
    pub batches: u64,
    /// Energy consumed by this client, watt-minutes.
    pub energy_wmin: f64,
    /// Batches from accepted contributions only.
    pub accepted_batches: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainRoundRecord {
    pub round: u32,
    pub domain_id: String,
    pub energy_wmin: f64,
    pub participants: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub strategy: String,
    pub seed: u64,
    pub days: u32,
    pub rounds: u32,
    pub waited_timesteps: u64,
    pub total_batches: u64,
    pub total_energy_wmin: f64,
    pub total_energy_kwh: f64,
    pub final_accuracy: f64,
    pub best_accuracy: f64,
    pub mean_round_minutes: f64,
    pub std_round_minutes: f64,
    pub participation_mean: f64,
    pub participation_std: f64,
    pub participation_cov: f64,
    /// Std over domains of the per-client mean participation share.
    pub domain_participation_std: f64,
    pub constrained: bool,
}

/// In-memory metrics of one experiment run.
#[derive(Debug, Clone)]
pub struct ExperimentMetrics {
    pub strategy: String,
    pub seed: u64,
    pub days: u32,
    pub timestep_minutes: u32,
    pub constrained: bool,
    pub rounds: Vec<RoundRecord>,
    pub clients: Vec<ClientTally>,
    pub domain_rounds: Vec<DomainRoundRecord>,
    pub waited_timesteps: u64,
    /// Wall-clock selection overhead per executed round, microseconds.
    pub selection_micros: Vec<u64>,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

impl ExperimentMetrics {
    pub fn final_accuracy(&self) -> f64 {
        self.rounds.last().map(|r| r.accuracy).unwrap_or(0.0)
    }

    pub fn best_accuracy(&self) -> f64 {
        self.rounds.iter().map(|r| r.accuracy).fold(0.0, f64::max)
    }

    /// Simulated minutes until the accuracy proxy first reaches `target`.
    pub fn time_to_accuracy(&self, target: f64) -> Option<u64> {
        self.rounds
            .iter()
            .find(|r| r.accuracy >= target)
            .map(|r| r.sim_minutes_end)
    }

    /// Total energy consumed until the accuracy proxy first reaches
    /// `target`, watt-minutes.
    pub fn energy_to_accuracy(&self, target: f64) -> Option<f64> {
        self.rounds
            .iter()
            .find(|r| r.accuracy >= target)
            .map(|r| r.cum_energy_wmin)
    }

    pub fn accepted_rounds_per_client(&self) -> Vec<u32> {
        self.clients.iter().map(|c| c.accepted_rounds).collect()
    }

    /// Coefficient of variation of per-client participation counts.
    pub fn participation_cov(&self) -> f64 {
        let (mean, std) = mean_std(self.clients.iter().map(|c| c.accepted_rounds as f64));
        if mean == 0.0 {
            0.0
        } else {
            std / mean
        }
    }

    /// Mean accepted rounds per client, grouped by domain id (ascending).
    pub fn domain_mean_participation(&self) -> Vec<(String, f64)> {
        let mut per_domain: std::collections::BTreeMap<&str, (u64, u64)> = Default::default();
        for client in &self.clients {
            let entry = per_domain.entry(&client.domain_id).or_default();
            entry.0 += client.accepted_rounds as u64;
            entry.1 += 1;
        }
        per_domain
            .into_iter()
            .map(|(domain, (sum, count))| (domain.to_owned(), sum as f64 / count as f64))
            .collect()
    }

    /// Per-domain mean participation as a share of executed rounds,
    /// comparable across runs with different round counts.
    pub fn domain_participation_shares(&self) -> Vec<(String, f64)> {
        let rounds = self.rounds.len().max(1) as f64;
        self.domain_mean_participation()
            .into_iter()
            .map(|(domain, mean)| (domain, mean / rounds))
            .collect()
    }

    pub fn total_energy_wmin(&self) -> f64 {
        self.rounds.iter().map(|r| r.energy_wmin).sum()
    }

    pub fn summary(&self) -> SummaryRow {
        let step = self.timestep_minutes as f64;
        let (mean_dur, std_dur) = mean_std(self.rounds.iter().map(|r| r.duration as f64 * step));
        let (part_mean, part_std) = mean_std(self.clients.iter().map(|c| c.accepted_rounds as f64));
        let (_, domain_std) =
            mean_std(self.domain_participation_shares().into_iter().map(|(_, m)| m));
        let total_energy = self.total_energy_wmin();
        SummaryRow {
            strategy: self.strategy.clone(),
            seed: self.seed,
            days: self.days,
            rounds: self.rounds.len() as u32,
            waited_timesteps: self.waited_timesteps,
            total_batches: self.rounds.iter().map(|r| r.batches).sum(),
            total_energy_wmin: total_energy,
            total_energy_kwh: total_energy / 60_000.0,
            final_accuracy: self.final_accuracy(),
            best_accuracy: self.best_accuracy(),
            mean_round_minutes: mean_dur,
            std_round_minutes: std_dur,
            participation_mean: part_mean,
            participation_std: part_std,
            participation_cov: self.participation_cov(),
            domain_participation_std: domain_std,
            constrained: self.constrained,
        }
    }

    /// Writes all CSV files into `dir`, creating it if necessary.
    pub fn write_csvs(&self, dir: &Path) -> Result<(), MetricsError> {
        fs::create_dir_all(dir)?;
        write_rows(&dir.join("rounds.csv"), &self.rounds)?;
        write_rows(&dir.join("clients.csv"), &self.clients)?;
        write_rows(&dir.join("domain_rounds.csv"), &self.domain_rounds)?;
        write_rows(&dir.join("summary.csv"), &[self.summary()])?;
        #[derive(Serialize)]
        struct TimingRow {
            round: u32,
            selection_micros: u64,
        }
        let timings: Vec<TimingRow> = self
            .selection_micros
            .iter()
            .enumerate()
            .map(|(i, micros)| TimingRow {
                round: i as u32,
                selection_micros: *micros,
            })
            .collect();
        write_rows(&dir.join("timings.csv"), &timings)?;
        Ok(())
    }
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), MetricsError> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, MetricsError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in reader.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

pub fn read_summary(dir: &Path) -> Result<SummaryRow, MetricsError> {
    let rows: Vec<SummaryRow> = read_rows(&dir.join("summary.csv"))?;
    rows.into_iter()
        .next()
        .ok_or_else(|| MetricsError::NoRuns(dir.to_path_buf()))
}

pub fn read_rounds(dir: &Path) -> Result<Vec<RoundRecord>, MetricsError> {
    read_rows(&dir.join("rounds.csv"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub run: String,
    pub strategy: String,
    pub seed: u64,
    pub rounds: u32,
    pub best_accuracy: f64,
    pub final_accuracy: f64,
    pub total_energy_kwh: f64,
    pub mean_round_minutes: f64,
    pub target_accuracy: f64,
    pub time_to_target_minutes: Option<u64>,
    pub energy_to_target_kwh: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportLongRow {
    pub run: String,
    pub strategy: String,
    pub seed: u64,
    pub round: u32,
    pub sim_minutes: u64,
    pub accuracy: f64,
    pub cum_energy_kwh: f64,
}

/// Compiled cross-run comparison.
#[derive(Debug, Clone)]
pub struct Report {
    pub target_accuracy: f64,
    pub rows: Vec<ReportRow>,
    pub long_rows: Vec<ReportLongRow>,
}

impl Report {
    pub fn write(&self, dir: &Path) -> Result<(), MetricsError> {
        fs::create_dir_all(dir)?;
        write_rows(&dir.join("report.csv"), &self.rows)?;
        write_rows(&dir.join("report_long.csv"), &self.long_rows)?;
        Ok(())
    }
}

/// Scans `in_dir` for run directories (anything containing `summary.csv`,
/// ordered by name) and compiles the comparison report. The target accuracy
/// is `target_override`, or the mean best accuracy of `random` runs, or the
/// lowest best accuracy across all runs when no random baseline is present.
pub fn compile_report(in_dir: &Path, target_override: Option<f64>) -> Result<Report, MetricsError> {
    let mut run_dirs: Vec<PathBuf> = fs::read_dir(in_dir)?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.join("summary.csv").is_file())
        .collect();
    run_dirs.sort();
    if run_dirs.is_empty() {
        return Err(MetricsError::NoRuns(in_dir.to_path_buf()));
    }
    let summaries: Vec<SummaryRow> = run_dirs
        .iter()
        .map(|dir| read_summary(dir))
        .collect::<Result<_, _>>()?;

    let target_accuracy = target_override.unwrap_or_else(|| {
        let random: Vec<f64> = summaries
            .iter()
            .filter(|s| s.strategy == "random")
            .map(|s| s.best_accuracy)
            .collect();
        if random.is_empty() {
            summaries
                .iter()
                .map(|s| s.best_accuracy)
                .fold(f64::INFINITY, f64::min)
        } else {
            random.iter().sum::<f64>() / random.len() as f64
        }
    });

    let mut rows = Vec::new();
    let mut long_rows = Vec::new();
    for (dir, summary) in run_dirs.iter().zip(&summaries) {
        let run = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let rounds = read_rounds(dir)?;
        let hit = rounds.iter().find(|r| r.accuracy >= target_accuracy);
        rows.push(ReportRow {
            run: run.clone(),
            strategy: summary.strategy.clone(),
            seed: summary.seed,
            rounds: summary.rounds,
            best_accuracy: summary.best_accuracy,
            final_accuracy: summary.final_accuracy,
            total_energy_kwh: summary.total_energy_kwh,
            mean_round_minutes: summary.mean_round_minutes,
            target_accuracy,
            time_to_target_minutes: hit.map(|r| r.sim_minutes_end),
            energy_to_target_kwh: hit.map(|r| r.cum_energy_wmin / 60_000.0),
        });
        for record in &rounds {
            long_rows.push(ReportLongRow {
                run: run.clone(),
                strategy: summary.strategy.clone(),
                seed: summary.seed,
                round: record.round,
                sim_minutes: record.sim_minutes_end,
                accuracy: record.accuracy,
                cum_energy_kwh: record.cum_energy_wmin / 60_000.0,
            });
        }
    }
    Ok(Report {
        target_accuracy,
        rows,
        long_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn metrics_with_rounds(rounds: Vec<RoundRecord>) -> ExperimentMetrics {
        ExperimentMetrics {
            strategy: "random".into(),
            seed: 1,
            days: 1,
            timestep_minutes: 1,
            constrained: true,
            rounds,
            clients: vec![
                ClientTally {
                    client_id: "a".into(),
                    domain_id: "d0".into(),
                    selected_rounds: 2,
                    accepted_rounds: 2,
                    discarded_rounds: 0,
                    batches: 20,
                    energy_wmin: 20.0,
                    accepted_batches: 20,
                },
                ClientTally {
                    client_id: "b".into(),
                    domain_id: "d1".into(),
                    selected_rounds: 1,
                    accepted_rounds: 0,
                    discarded_rounds: 1,
                    batches: 3,
                    energy_wmin: 3.0,
                    accepted_batches: 0,
                },
            ],
            domain_rounds: Vec::new(),
            waited_timesteps: 5,
            selection_micros: vec![10, 20],
        }
    }

    fn record(round: u32, accuracy: f64, cum_energy: f64, minutes: u64) -> RoundRecord {
        RoundRecord {
            round,
            t_start: 0,
            duration: 10,
            selected: 2,
            accepted: 1,
            discarded: 1,
            batches: 10,
            energy_wmin: 10.0,
            cum_energy_wmin: cum_energy,
            accuracy,
            blocklist_size: 0,
            omega: 0.0,
            sim_minutes_end: minutes,
        }
    }

    #[test]
    fn time_and_energy_to_accuracy_find_first_crossing() {
        let m = metrics_with_rounds(vec![
            record(0, 0.1, 10.0, 10),
            record(1, 0.3, 20.0, 20),
            record(2, 0.5, 30.0, 30),
        ]);
        assert_eq!(m.time_to_accuracy(0.3), Some(20));
        assert_eq!(m.energy_to_accuracy(0.3), Some(20.0));
        assert_eq!(m.time_to_accuracy(0.9), None);
    }

    #[test]
    fn summary_aggregates_participation() {
        let m = metrics_with_rounds(vec![record(0, 0.1, 10.0, 10)]);
        let s = m.summary();
        assert_eq!(s.participation_mean, 1.0);
        assert_eq!(s.rounds, 1);
        assert!(s.participation_cov > 0.0);
        assert_eq!(s.domain_participation_std, 1.0);
    }

    #[test]
    fn csv_round_trip_through_directory() {
        let dir = tempfile::tempdir().unwrap();
        let m = metrics_with_rounds(vec![record(0, 0.1, 10.0, 10), record(1, 0.4, 22.5, 25)]);
        m.write_csvs(dir.path()).unwrap();
        let summary = read_summary(dir.path()).unwrap();
        assert_eq!(summary, m.summary());
        let rounds = read_rounds(dir.path()).unwrap();
        assert_eq!(rounds, m.rounds);
    }

    #[test]
    fn report_uses_random_best_accuracy_as_target() {
        let root = tempfile::tempdir().unwrap();
        let m1 = metrics_with_rounds(vec![record(0, 0.2, 10.0, 10), record(1, 0.4, 20.0, 20)]);
        let mut m2 = metrics_with_rounds(vec![record(0, 0.5, 8.0, 8)]);
        m2.strategy = "fedzero".into();
        m2.seed = 2;
        m1.write_csvs(&root.path().join("random_1")).unwrap();
        m2.write_csvs(&root.path().join("fedzero_2")).unwrap();
        let report = compile_report(root.path(), None).unwrap();
        assert_eq!(report.target_accuracy, 0.4);
        let fed = report.rows.iter().find(|r| r.strategy == "fedzero").unwrap();
        assert_eq!(fed.time_to_target_minutes, Some(8));
        let rnd = report.rows.iter().find(|r| r.strategy == "random").unwrap();
        assert_eq!(rnd.time_to_target_minutes, Some(20));
        assert_eq!(report.long_rows.len(), 3);
    }
}
