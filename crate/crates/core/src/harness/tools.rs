use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::runner::build_federation;
use crate::error::{Error, Result};
use crate::scheduler::{
    brute_force_schedule, continuous_allocation_for, enumerate_maximal_plans, round_and_repair,
    schedule, uniform_plan, CostModel, ScheduleMode, ScheduleParams, StepPlan,
};
use crate::vector::ParamVector;

/// Input of the standalone scheduler: a cost model, client weights and the
/// error-cost coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleRequest {
    pub step_costs: Vec<f64>,
    pub comm_delays: Vec<f64>,
    pub budget: f64,
    pub weights: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
    #[serde(default)]
    pub mode: ScheduleMode,
}

impl ScheduleRequest {
    /// Reads TOML (`.toml`) or JSON (anything else).
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let shown = path.display().to_string();
        if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| Error::config(shown, e.message().to_string()))
        } else {
            serde_json::from_str(&text).map_err(|e| Error::config(shown, e.to_string()))
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ScheduleReport {
    pub greedy: StepPlan,
    /// Exhaustive optimum over maximal plans, when the instance is small
    /// enough to enumerate.
    pub oracle: Option<StepPlan>,
    pub oracle_note: Option<String>,
    pub maximal_plans: Option<usize>,
    pub greedy_matches_oracle: Option<bool>,
    pub continuous: Option<Vec<f64>>,
    pub rounded: Option<StepPlan>,
    pub uniform: StepPlan,
}

pub fn schedule_report(req: &ScheduleRequest) -> Result<ScheduleReport> {
    let cost = CostModel::new(req.step_costs.clone(), req.comm_delays.clone(), req.budget)?;
    let params = ScheduleParams::new(req.alpha, req.beta)?;
    plan_report(&cost, &req.weights, &params, req.mode)
}

fn plan_report(
    cost: &CostModel,
    weights: &[f64],
    params: &ScheduleParams,
    mode: ScheduleMode,
) -> Result<ScheduleReport> {
    let greedy = schedule(cost, weights, params, mode)?;
    let (oracle, oracle_note, maximal_plans) = match enumerate_maximal_plans(cost) {
        Ok(plans) => (
            Some(brute_force_schedule(cost, weights, params)?),
            None,
            Some(plans.len()),
        ),
        Err(Error::SearchSpaceTooLarge(msg)) => (None, Some(msg), None),
        Err(e) => return Err(e),
    };
    let greedy_matches_oracle = oracle.as_ref().map(|o| {
        (o.objective_value - greedy.objective_value).abs()
            <= 1e-12 * o.objective_value.abs().max(1.0)
    });
    let (continuous, rounded) = match continuous_allocation_for(cost, weights) {
        Ok(c) => {
            let r = round_and_repair(cost, weights, params, &c)?;
            (Some(c), Some(r))
        }
        Err(_) => (None, None),
    };
    let uniform = StepPlan::evaluate(uniform_plan(cost)?, cost, weights, params)?;
    Ok(ScheduleReport {
        greedy,
        oracle,
        oracle_note,
        maximal_plans,
        greedy_matches_oracle,
        continuous,
        rounded,
        uniform,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleReport {
    pub seed: u64,
    pub round_budget: f64,
    pub params: ScheduleParams,
    pub schedule: ScheduleReport,
}

/// Scheduler-versus-oracle comparison for the first round of every seed in
/// an experiment config, with `α`, `β` as the adaptive strategy would use.
pub fn oracle_report(cfg: &ExperimentConfig) -> Result<Vec<OracleReport>> {
    let budget = cfg
        .round_budget
        .ok_or_else(|| Error::config("round_budget", "the oracle needs a per-round budget"))?;
    cfg.seeds
        .iter()
        .map(|&seed| {
            let fed = build_federation(cfg, seed)?;
            let params = match (cfg.amsfl.alpha, cfg.amsfl.beta) {
                (Some(a), Some(b)) => ScheduleParams::new(a, b)?,
                _ => {
                    let c = &fed.constants;
                    let g_k = fed.global_gradient(&ParamVector::zeros(fed.dim()))?.norm();
                    ScheduleParams::derive(cfg.eta, c.mu, c.lipschitz, c.grad_bound, g_k)?
                }
            };
            let cost = fed.cost_model(budget)?;
            Ok(OracleReport {
                seed,
                round_budget: budget,
                params,
                schedule: plan_report(&cost, &fed.weights(), &params, cfg.amsfl.mode)?,
            })
        })
        .collect()
}
