use std::path::{Path, PathBuf};

use amsfl_core::harness::{
    read_jsonl, run_experiment, schedule_report, ExperimentConfig, ScheduleRequest,
};

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn shipped_configs_parse() {
    for name in ["logistic.toml", "quadratic_time_budget.toml"] {
        let cfg = ExperimentConfig::from_file(configs_dir().join(name)).unwrap();
        assert!(!cfg.strategies.is_empty(), "{name}");
    }
    let req = ScheduleRequest::from_file(configs_dir().join("worked_schedule.toml")).unwrap();
    assert_eq!(schedule_report(&req).unwrap().greedy.steps, vec![2, 2]);
}

#[test]
fn logistic_budget_matches_five_step_round() {
    let cfg = ExperimentConfig::from_file(configs_dir().join("logistic.toml")).unwrap();
    let five_steps: f64 = cfg
        .costs
        .step_costs
        .iter()
        .zip(&cfg.costs.comm_delays)
        .map(|(c, b)| 5.0 * c + b)
        .sum();
    assert!((cfg.round_budget.unwrap() - five_steps).abs() < 1e-12);
}

const DATA: &str = "\
duration,proto,bytes,label
0.0,tcp,100,normal
1.0,udp,20,attack
2.0,tcp,300,normal
3.0,icmp,0,attack
0.5,udp,50,normal
1.5,tcp,10,attack
2.5,icmp,80,normal
3.5,udp,5,attack
";

const SCHEMA: &str = r#"
has_header = true

[[columns]]
name = "duration"
kind = "numeric"

[[columns]]
name = "proto"
kind = "categorical"
categories = ["tcp", "udp", "icmp"]

[[columns]]
name = "bytes"
kind = "numeric"

[[columns]]
name = "label"
kind = "label"
classes = ["normal", "attack"]
"#;

const CONFIG: &str = r#"
name = "csv"
eta = 0.5
rounds = 5
round_budget = 12.0
seeds = [3, 4]
target_accuracy = 0.5
output = "out"

[task]
kind = "csv"
path = "data.csv"
schema = "schema.toml"
num_clients = 2
positive_class = "attack"
partition = { method = "label_skew", classes_per_client = 1 }

[costs]
step_costs = [1.0, 2.0]
comm_delays = [1.0, 1.0]

[[strategies]]
kind = "amsfl"

[[strategies]]
kind = "scaffold"
fixed_steps = 2
"#;

#[test]
fn csv_experiment_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("data.csv"), DATA).unwrap();
    std::fs::write(dir.path().join("schema.toml"), SCHEMA).unwrap();
    let cfg_path = dir.path().join("exp.toml");
    std::fs::write(&cfg_path, CONFIG).unwrap();

    let cfg = ExperimentConfig::from_file(&cfg_path).unwrap();
    let report = run_experiment(&cfg).unwrap();
    assert_eq!(report.failed_runs(), 0);
    let summaries = report.summaries();
    assert_eq!(summaries.len(), 4);

    let out = dir.path().join("out");
    assert!(out.join("summary.csv").exists());
    for s in &summaries {
        let records = read_jsonl(&out.join(format!("{}.jsonl", s.run_id))).unwrap();
        assert_eq!(records.len(), 5);
        assert!(records.iter().all(|r| r.global_accuracy.is_some()));
        assert!(records
            .windows(2)
            .all(|w| w[1].sim_time_s > w[0].sim_time_s));
        assert!(out.join(format!("{}.summary.json", s.run_id)).exists());
    }
}

#[test]
fn csv_label_skew_needs_enough_clients() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("data.csv"), DATA).unwrap();
    std::fs::write(dir.path().join("schema.toml"), SCHEMA).unwrap();
    let cfg_path = dir.path().join("exp.toml");
    let text = CONFIG
        .replace("num_clients = 2", "num_clients = 1")
        .replace("[1.0, 2.0]", "[1.0]")
        .replace("[1.0, 1.0]", "[1.0]");
    std::fs::write(&cfg_path, text).unwrap();
    let cfg = ExperimentConfig::from_file(&cfg_path).unwrap();
    assert!(run_experiment(&cfg).is_err());
}
