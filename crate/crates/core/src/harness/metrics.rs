use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::federation::{History, RunStatus};

/// One line of a run's metrics stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub run_id: String,
    pub seed: u64,
    pub strategy: String,
    /// 1-based round index.
    pub round: usize,
    pub sim_time_s: f64,
    pub global_loss: f64,
    pub global_accuracy: Option<f64>,
    pub steps: Vec<usize>,
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "schedule_D2")]
    pub schedule_d2: f64,
    #[serde(rename = "Delta_k")]
    pub delta_k: f64,
    pub error_sq: Option<f64>,
    pub identity_residual: Option<f64>,
}

impl MetricsRecord {
    pub fn from_history(run_id: &str, seed: u64, history: &History) -> Vec<Self> {
        history
            .rounds
            .iter()
            .map(|r| Self {
                run_id: run_id.to_string(),
                seed,
                strategy: history.strategy.name().to_string(),
                round: r.trace.round + 1,
                sim_time_s: r.sim_time,
                global_loss: r.loss,
                global_accuracy: r.accuracy,
                steps: r.steps.clone(),
                e: r.trace.aggregates.e,
                schedule_d2: r.trace.aggregates.schedule_d2,
                delta_k: r.delta_k,
                error_sq: r.error_sq,
                identity_residual: r.identity_residual,
            })
            .collect()
    }
}

/// First round at which a target is met, with the simulated time so far.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetHit {
    pub rounds: usize,
    pub sim_time_s: f64,
}

/// First record whose global accuracy is at least `target_accuracy`;
/// `None` when never reached.
pub fn time_to_target(records: &[MetricsRecord], target_accuracy: f64) -> Option<TargetHit> {
    records
        .iter()
        .find(|r| r.global_accuracy.is_some_and(|a| a >= target_accuracy))
        .map(hit)
}

/// First record whose global loss is at most `target_loss`.
pub fn time_to_loss(records: &[MetricsRecord], target_loss: f64) -> Option<TargetHit> {
    records
        .iter()
        .find(|r| r.global_loss <= target_loss)
        .map(hit)
}

fn hit(r: &MetricsRecord) -> TargetHit {
    TargetHit {
        rounds: r.round,
        sim_time_s: r.sim_time_s,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub seed: u64,
    pub strategy: String,
    pub status: RunStatus,
    pub rounds: usize,
    pub sim_time_s: f64,
    pub mean_time_per_round: Option<f64>,
    pub final_loss: f64,
    pub final_accuracy: Option<f64>,
    pub final_error_sq: Option<f64>,
    pub time_to_accuracy: Option<TargetHit>,
    pub time_to_loss: Option<TargetHit>,
}

impl RunSummary {
    pub fn new(
        run_id: &str,
        seed: u64,
        history: &History,
        records: &[MetricsRecord],
        target_accuracy: Option<f64>,
        target_loss: Option<f64>,
    ) -> Self {
        let rounds = history.rounds.len();
        let sim_time_s = history.sim_time();
        Self {
            run_id: run_id.to_string(),
            seed,
            strategy: history.strategy.name().to_string(),
            status: history.status.clone(),
            rounds,
            sim_time_s,
            mean_time_per_round: (rounds > 0).then(|| sim_time_s / rounds as f64),
            final_loss: history
                .rounds
                .last()
                .map_or(history.initial_loss, |r| r.loss),
            final_accuracy: history
                .rounds
                .last()
                .map_or(history.initial_accuracy, |r| r.accuracy),
            final_error_sq: history.final_error_sq(),
            time_to_accuracy: target_accuracy.and_then(|t| time_to_target(records, t)),
            time_to_loss: target_loss.and_then(|t| time_to_loss(records, t)),
        }
    }

    pub fn failed(&self) -> bool {
        matches!(self.status, RunStatus::Diverged { .. })
    }
}

/// Flat row of `summary.csv`.
#[derive(Serialize)]
struct SummaryRow<'a> {
    run_id: &'a str,
    seed: u64,
    strategy: &'a str,
    status: &'static str,
    rounds: usize,
    sim_time_s: f64,
    mean_time_per_round: Option<f64>,
    final_loss: f64,
    final_accuracy: Option<f64>,
    final_error_sq: Option<f64>,
    rounds_to_accuracy: Option<usize>,
    time_to_accuracy_s: Option<f64>,
    rounds_to_loss: Option<usize>,
    time_to_loss_s: Option<f64>,
}

pub fn write_jsonl(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<MetricsRecord>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l).map_err(std::io::Error::from)?))
        .collect()
}

pub fn write_summary_json(path: &Path, summary: &RunSummary) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, summary).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn write_summary_csv(path: &Path, summaries: &[RunSummary]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for s in summaries {
        w.serialize(SummaryRow {
            run_id: &s.run_id,
            seed: s.seed,
            strategy: &s.strategy,
            status: s.status.label(),
            rounds: s.rounds,
            sim_time_s: s.sim_time_s,
            mean_time_per_round: s.mean_time_per_round,
            final_loss: s.final_loss,
            final_accuracy: s.final_accuracy,
            final_error_sq: s.final_error_sq,
            rounds_to_accuracy: s.time_to_accuracy.map(|h| h.rounds),
            time_to_accuracy_s: s.time_to_accuracy.map(|h| h.sim_time_s),
            rounds_to_loss: s.time_to_loss.map(|h| h.rounds),
            time_to_loss_s: s.time_to_loss.map(|h| h.sim_time_s),
        })?;
    }
    w.flush()?;
    Ok(())
}
