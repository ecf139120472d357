use std::path::Path;

use log::{info, warn};
use rayon::prelude::*;

use super::config::{ExperimentConfig, TaskConfig, NSLKDD_SCHEMA};
use super::metrics::{
    write_jsonl, write_summary_csv, write_summary_json, MetricsRecord, RunSummary,
};
use crate::baselines::{Strategy, StrategySpec};
use crate::datasets::{
    generate_logistic_federation, generate_quadratic_federation, load_csv, nslkdd_schema,
    partition_noniid, tabular_federation, DatasetSchema, MinMaxScaler, PartitionSpec,
    TabularDataset,
};
use crate::error::{Error, Result};
use crate::federation::{run_rounds, Federation, History, RunConfig, ScheduleSource, StopRule};
use crate::scheduler::ScheduleParams;

/// Data loaded once per experiment and shared by all runs.
enum TaskData {
    Synthetic,
    Tabular(TabularDataset),
}

fn prepare(cfg: &ExperimentConfig) -> Result<TaskData> {
    let TaskConfig::Csv(task) = &cfg.task else {
        return Ok(TaskData::Synthetic);
    };
    let schema = if task.schema.as_os_str() == NSLKDD_SCHEMA {
        nslkdd_schema()
    } else {
        DatasetSchema::from_file(&task.schema)?
    };
    let mut data = load_csv(&task.path, &schema)?;
    if task.scale {
        MinMaxScaler::fit(&data)?.transform(&mut data)?;
    }
    info!(
        "loaded {} rows with {} features from {}",
        data.len(),
        data.dim(),
        task.path.display()
    );
    Ok(TaskData::Tabular(data))
}

fn federation_for(cfg: &ExperimentConfig, data: &TaskData, seed: u64) -> Result<Federation> {
    let costs = &cfg.costs;
    match (&cfg.task, data) {
        (TaskConfig::Quadratic(t), _) => generate_quadratic_federation(t, seed)?
            .to_federation(&costs.step_costs, &costs.comm_delays),
        (TaskConfig::Logistic(t), _) => generate_logistic_federation(t, seed)?
            .to_federation(&costs.step_costs, &costs.comm_delays),
        (TaskConfig::Csv(t), TaskData::Tabular(ds)) => {
            let positive = ds
                .class_names
                .iter()
                .position(|c| *c == t.positive_class)
                .ok_or_else(|| {
                    Error::config(
                        "task.positive_class",
                        format!("no class named {:?}", t.positive_class),
                    )
                })?;
            let parts =
                partition_noniid(ds, &PartitionSpec::new(t.partition, t.num_clients, seed))?;
            tabular_federation(
                &parts,
                positive,
                t.ridge,
                &costs.step_costs,
                &costs.comm_delays,
                None,
            )
        }
        (TaskConfig::Csv(_), TaskData::Synthetic) => unreachable!("csv data is loaded in prepare"),
    }
}

/// Builds the federation a config describes for one seed.
pub fn build_federation(cfg: &ExperimentConfig, seed: u64) -> Result<Federation> {
    federation_for(cfg, &prepare(cfg)?, seed)
}

/// Identifier of a run: strategy name, position in the config and seed.
pub fn run_id(index: usize, spec: &StrategySpec, seed: u64) -> String {
    format!("{}-{index}-seed{seed}", spec.strategy.name())
}

pub fn run_config(cfg: &ExperimentConfig) -> RunConfig {
    RunConfig {
        eta: cfg.eta,
        stop: match (cfg.rounds, cfg.time_budget) {
            (Some(k), _) => StopRule::Rounds(k),
            (None, Some(t)) => StopRule::TimeBudget(t),
            (None, None) => StopRule::Rounds(0),
        },
        round_budget: cfg.round_budget,
        clock: cfg.clock,
        initial_model: None,
        divergence_threshold: cfg.divergence_threshold,
    }
}

pub fn schedule_source(cfg: &ExperimentConfig, spec: &StrategySpec) -> Result<ScheduleSource> {
    Ok(match spec.strategy {
        Strategy::Amsfl => ScheduleSource::Greedy {
            mode: cfg.amsfl.mode,
            params: match (cfg.amsfl.alpha, cfg.amsfl.beta) {
                (Some(a), Some(b)) => Some(ScheduleParams::new(a, b)?),
                _ => None,
            },
        },
        _ => ScheduleSource::Constant(spec.fixed_steps),
    })
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub run_id: String,
    pub seed: u64,
    pub strategy: StrategySpec,
    pub history: History,
    pub records: Vec<MetricsRecord>,
    pub summary: RunSummary,
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub name: String,
    /// Ordered by seed, then by strategy position in the config.
    pub runs: Vec<RunOutcome>,
}

impl ExperimentReport {
    pub fn summaries(&self) -> Vec<RunSummary> {
        self.runs.iter().map(|r| r.summary.clone()).collect()
    }

    pub fn failed_runs(&self) -> usize {
        self.runs.iter().filter(|r| r.summary.failed()).count()
    }
}

fn execute(cfg: &ExperimentConfig, data: &TaskData, seed: u64, index: usize) -> Result<RunOutcome> {
    let spec = cfg.strategies[index];
    let id = run_id(index, &spec, seed);
    let fed = federation_for(cfg, data, seed)?;
    let history = run_rounds(
        &fed,
        &run_config(cfg),
        &spec.strategy,
        &schedule_source(cfg, &spec)?,
    )?;
    if let crate::federation::RunStatus::Diverged { round, .. } = history.status {
        warn!("{id}: diverged in round {}", round + 1);
    }
    let records = MetricsRecord::from_history(&id, seed, &history);
    let summary = RunSummary::new(
        &id,
        seed,
        &history,
        &records,
        cfg.target_accuracy,
        cfg.target_loss,
    );
    Ok(RunOutcome {
        run_id: id,
        seed,
        strategy: spec,
        history,
        records,
        summary,
    })
}

/// Runs every (seed, strategy) pair, concurrently, and writes metrics when
/// the config names an output directory. Results do not depend on thread
/// scheduling.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let data = prepare(cfg)?;
    let jobs: Vec<(u64, usize)> = cfg
        .seeds
        .iter()
        .flat_map(|&s| (0..cfg.strategies.len()).map(move |i| (s, i)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(seed, index)| execute(cfg, &data, seed, index))
        .collect::<Result<Vec<_>>>()?;
    let report = ExperimentReport {
        name: cfg.name.clone(),
        runs,
    };
    if let Some(dir) = &cfg.output {
        write_report(dir, &report)?;
    }
    Ok(report)
}

/// `<run_id>.jsonl` and `<run_id>.summary.json` per run, plus `summary.csv`.
pub fn write_report(dir: &Path, report: &ExperimentReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for run in &report.runs {
        write_jsonl(&dir.join(format!("{}.jsonl", run.run_id)), &run.records)?;
        write_summary_json(
            &dir.join(format!("{}.summary.json", run.run_id)),
            &run.summary,
        )?;
    }
    write_summary_csv(&dir.join("summary.csv"), &report.summaries())
}
