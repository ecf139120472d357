//! Experiment configs, the (seed × strategy) runner, metrics output and the
//! verification suites behind the `amsfl` command line.

mod config;
mod metrics;
mod runner;
mod tools;
pub mod verify;

pub use config::{AmsflConfig, CostConfig, CsvTask, ExperimentConfig, TaskConfig, NSLKDD_SCHEMA};
pub use metrics::{
    read_jsonl, time_to_loss, time_to_target, write_jsonl, write_summary_csv, write_summary_json,
    MetricsRecord, RunSummary, TargetHit,
};
pub use runner::{
    build_federation, run_config, run_experiment, run_id, schedule_source, write_report,
    ExperimentReport, RunOutcome,
};
pub use tools::{oracle_report, schedule_report, OracleReport, ScheduleReport, ScheduleRequest};
pub use verify::{verify, PropertyCheck, Suite, SuiteReport};
