use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{Strategy, StrategySpec};
use crate::datasets::{LogisticTask, PartitionMethod, QuadraticTask};
use crate::error::{Error, Result};
use crate::federation::{ClockMode, DEFAULT_DIVERGENCE_THRESHOLD};
use crate::scheduler::ScheduleMode;

/// Name that selects the built-in NSL-KDD schema instead of a sidecar file.
pub const NSLKDD_SCHEMA: &str = "nslkdd";

/// Experiment description, usually read from a TOML file.
///
/// ```toml
/// eta = 0.05
/// rounds = 50
/// round_budget = 40.0
/// seeds = [1, 2, 3]
///
/// [task]
/// kind = "logistic"
/// num_clients = 5
/// dim = 10
/// samples_per_client = 200
/// heterogeneity = 1.0
///
/// [costs]
/// step_costs = [1.0, 1.5, 2.0, 3.0, 4.0]
/// comm_delays = [2.0, 2.0, 2.0, 2.0, 2.0]
///
/// [[strategies]]
/// kind = "amsfl"
///
/// [[strategies]]
/// kind = "fedavg"
/// fixed_steps = 5
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub task: TaskConfig,
    pub strategies: Vec<StrategySpec>,
    pub eta: f64,
    /// Stop after this many rounds. Exclusive with `time_budget`.
    #[serde(default)]
    pub rounds: Option<usize>,
    /// Stop when the next round would exceed this many simulated seconds.
    #[serde(default)]
    pub time_budget: Option<f64>,
    /// Per-round budget `S` used by the adaptive scheduler.
    #[serde(default)]
    pub round_budget: Option<f64>,
    pub costs: CostConfig,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub clock: ClockMode,
    #[serde(default)]
    pub amsfl: AmsflConfig,
    #[serde(default)]
    pub target_accuracy: Option<f64>,
    #[serde(default)]
    pub target_loss: Option<f64>,
    #[serde(default = "default_threshold")]
    pub divergence_threshold: f64,
    /// Directory for metrics files; nothing is written when absent.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_threshold() -> f64 {
    DEFAULT_DIVERGENCE_THRESHOLD
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskConfig {
    Quadratic(QuadraticTask),
    Logistic(LogisticTask),
    Csv(CsvTask),
}

impl TaskConfig {
    pub fn num_clients(&self) -> usize {
        match self {
            TaskConfig::Quadratic(t) => t.num_clients,
            TaskConfig::Logistic(t) => t.num_clients,
            TaskConfig::Csv(t) => t.num_clients,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvTask {
    pub path: PathBuf,
    /// Schema sidecar path, or `"nslkdd"` for the built-in schema.
    pub schema: PathBuf,
    pub num_clients: usize,
    pub partition: PartitionMethod,
    /// Class treated as positive in the one-vs-rest logistic model.
    pub positive_class: String,
    #[serde(default = "default_ridge")]
    pub ridge: f64,
    /// Min-max scale numeric columns with statistics of this file.
    #[serde(default = "default_true")]
    pub scale: bool,
}

fn default_ridge() -> f64 {
    0.01
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    /// Seconds per local step, one per client.
    pub step_costs: Vec<f64>,
    /// Seconds of communication per round, one per client.
    pub comm_delays: Vec<f64>,
}

/// Adaptive scheduler settings. Without `alpha`/`beta` they are derived
/// each round from the step size and smoothness constants.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmsflConfig {
    #[serde(default)]
    pub mode: ScheduleMode,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub beta: Option<f64>,
}

impl ExperimentConfig {
    /// Parses and validates a TOML config. Relative paths inside it are
    /// resolved against the config file's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let message = e.message().to_string();
            let location = e
                .span()
                .map(|s| {
                    let line = text[..s.start].matches('\n').count() + 1;
                    format!("line {line}")
                })
                .unwrap_or_else(|| "<config>".into());
            Error::config(location, message)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let TaskConfig::Csv(t) = &mut self.task {
            fix(&mut t.path);
            if t.schema.as_os_str() != NSLKDD_SCHEMA {
                fix(&mut t.schema);
            }
        }
        if let Some(out) = &mut self.output {
            fix(out);
        }
    }

    pub fn has_amsfl(&self) -> bool {
        self.strategies
            .iter()
            .any(|s| s.strategy == Strategy::Amsfl)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |path: &str, msg: String| Err(Error::config(path, msg));
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad("eta", format!("must be a positive real, got {}", self.eta));
        }
        match (self.rounds, self.time_budget) {
            (Some(_), Some(_)) | (None, None) => {
                return bad(
                    "rounds",
                    "set exactly one of `rounds` and `time_budget`".into(),
                );
            }
            (None, Some(t)) if !(t > 0.0 && t.is_finite()) => {
                return bad("time_budget", format!("must be positive, got {t}"));
            }
            _ => {}
        }
        if self.seeds.is_empty() {
            return bad("seeds", "at least one seed is required".into());
        }
        if self.strategies.is_empty() {
            return bad("strategies", "at least one strategy is required".into());
        }
        for (i, s) in self.strategies.iter().enumerate() {
            if let Err(e) = s.strategy.validate() {
                return bad(&format!("strategies[{i}]"), e.to_string());
            }
            if s.fixed_steps == 0 {
                return bad(
                    &format!("strategies[{i}].fixed_steps"),
                    "must be at least 1".into(),
                );
            }
        }
        if !(self.divergence_threshold > 0.0) {
            return bad("divergence_threshold", "must be positive".into());
        }

        let n = self.task.num_clients();
        if n == 0 {
            return bad("task.num_clients", "must be at least 1".into());
        }
        if self.costs.step_costs.len() != n {
            return bad(
                "costs.step_costs",
                format!(
                    "expected {n} entries, found {}",
                    self.costs.step_costs.len()
                ),
            );
        }
        if self.costs.comm_delays.len() != n {
            return bad(
                "costs.comm_delays",
                format!(
                    "expected {n} entries, found {}",
                    self.costs.comm_delays.len()
                ),
            );
        }
        for (i, &c) in self.costs.step_costs.iter().enumerate() {
            if !(c > 0.0 && c.is_finite()) {
                return bad(
                    &format!("costs.step_costs[{i}]"),
                    format!("must be positive, got {c}"),
                );
            }
        }
        for (i, &b) in self.costs.comm_delays.iter().enumerate() {
            if !(b >= 0.0 && b.is_finite()) {
                return bad(
                    &format!("costs.comm_delays[{i}]"),
                    format!("must be nonnegative, got {b}"),
                );
            }
        }

        match self.round_budget {
            None if self.has_amsfl() => {
                return bad(
                    "round_budget",
                    "required when the amsfl strategy is selected".into(),
                );
            }
            Some(s) => {
                let minimum: f64 = self
                    .costs
                    .step_costs
                    .iter()
                    .chain(&self.costs.comm_delays)
                    .sum();
                if !(s >= minimum && s.is_finite()) {
                    return bad(
                        "round_budget",
                        format!("{s} cannot fit one step per client ({minimum} needed)"),
                    );
                }
            }
            None => {}
        }
        match (self.amsfl.alpha, self.amsfl.beta) {
            (Some(a), Some(b)) => {
                if !(a >= 0.0 && b >= 0.0 && a.is_finite() && b.is_finite()) {
                    return bad("amsfl", "alpha and beta must be nonnegative".into());
                }
            }
            (None, None) => {}
            _ => return bad("amsfl", "set both alpha and beta or neither".into()),
        }
        if let Some(t) = self.target_accuracy {
            if !t.is_finite() {
                return bad("target_accuracy", "must be finite".into());
            }
        }
        if let Some(t) = self.target_loss {
            if !t.is_finite() {
                return bad("target_loss", "must be finite".into());
            }
        }

        match &self.task {
            TaskConfig::Quadratic(t) => {
                if t.dim == 0 {
                    return bad("task.dim", "must be at least 1".into());
                }
                if !(t.heterogeneity >= 0.0) {
                    return bad("task.heterogeneity", "must be nonnegative".into());
                }
                if !(t.mu >= 0.0 && t.lipschitz >= t.mu && t.lipschitz > 0.0) {
                    return bad(
                        "task.mu",
                        "need 0 <= mu <= lipschitz with lipschitz > 0".into(),
                    );
                }
            }
            TaskConfig::Logistic(t) => {
                if t.dim == 0 {
                    return bad("task.dim", "must be at least 1".into());
                }
                if t.samples_per_client == 0 {
                    return bad("task.samples_per_client", "must be at least 1".into());
                }
                if !(t.ridge > 0.0) {
                    return bad("task.ridge", "must be positive".into());
                }
            }
            TaskConfig::Csv(t) => {
                if !(t.ridge >= 0.0) {
                    return bad("task.ridge", "must be nonnegative".into());
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
        eta = 0.05
        rounds = 3
        round_budget = 40.0
        seeds = [1]

        [task]
        kind = "quadratic"
        num_clients = 2
        dim = 3
        heterogeneity = 1.0

        [costs]
        step_costs = [1.0, 2.0]
        comm_delays = [0.5, 0.5]

        [[strategies]]
        kind = "amsfl"

        [[strategies]]
        kind = "fedprox"
        mu_prox = 0.0
        fixed_steps = 3
    "#;

    fn path_of(text: &str) -> String {
        match ExperimentConfig::from_toml(text).unwrap_err() {
            Error::Config { path, .. } => path,
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parses_full_config() {
        let cfg = ExperimentConfig::from_toml(BASE).unwrap();
        assert_eq!(cfg.strategies.len(), 2);
        assert_eq!(cfg.strategies[1].fixed_steps, 3);
        assert_eq!(
            cfg.strategies[1].strategy,
            Strategy::Fedprox { mu_prox: 0.0 }
        );
        assert_eq!(cfg.clock, ClockMode::Additive);
        assert!(matches!(cfg.task, TaskConfig::Quadratic(ref q) if q.mu == 0.5));
    }

    #[test]
    fn stopping_rule_must_be_unique() {
        assert_eq!(
            path_of(&BASE.replace("rounds = 3", "rounds = 3\ntime_budget = 10.0")),
            "rounds"
        );
        assert_eq!(path_of(&BASE.replace("rounds = 3", "")), "rounds");
    }

    #[test]
    fn field_paths_in_errors() {
        assert_eq!(path_of(&BASE.replace("seeds = [1]", "seeds = []")), "seeds");
        assert_eq!(
            path_of(&BASE.replace("[1.0, 2.0]", "[1.0, -2.0]")),
            "costs.step_costs[1]"
        );
        assert_eq!(
            path_of(&BASE.replace("[0.5, 0.5]", "[0.5]")),
            "costs.comm_delays"
        );
        assert_eq!(
            path_of(&BASE.replace("round_budget = 40.0", "")),
            "round_budget"
        );
        assert_eq!(
            path_of(&BASE.replace("round_budget = 40.0", "round_budget = 3.0")),
            "round_budget"
        );
        assert_eq!(
            path_of(&BASE.replace("fixed_steps = 3", "fixed_steps = 0")),
            "strategies[1].fixed_steps"
        );
        assert_eq!(path_of(&BASE.replace("eta = 0.05", "eta = -1.0")), "eta");
    }

    #[test]
    fn syntax_errors_report_a_line() {
        let path = path_of(&BASE.replace("eta = 0.05", "eta = \"fast\""));
        assert!(path.starts_with("line "), "{path}");
        let path = path_of(&format!("bogus = 1\n{BASE}"));
        assert!(path.starts_with("line "), "{path}");
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let text = BASE.replace("seeds = [1]", "seeds = [1]\noutput = \"out\"");
        let path = dir.path().join("exp.toml");
        std::fs::write(&path, text).unwrap();
        let cfg = ExperimentConfig::from_file(&path).unwrap();
        assert_eq!(cfg.output.unwrap(), dir.path().join("out"));
    }
}
