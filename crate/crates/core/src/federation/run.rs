use log::{debug, warn};
use serde::{Deserialize, Serialize};

use super::{ClientState, ClientTrace, RoundTrace};
use crate::baselines::{Strategy, StrategyRunner};
use crate::error::{Error, Result};
use crate::federation::error_identity_check;
use crate::objectives::SmoothnessConstants;
use crate::scheduler::{schedule, CostModel, ScheduleMode, ScheduleParams, StepPlan};
use crate::vector::ParamVector;

pub const DEFAULT_DIVERGENCE_THRESHOLD: f64 = 1e12;

/// Guard for time-budgeted runs.
const MAX_ROUNDS: usize = 1_000_000;

const WEIGHT_SUM_TOL: f64 = 1e-12;
const OPTIMUM_TOL: f64 = 1e-8;

/// A client population with optional known optimum and the smoothness
/// constants used for scheduling and bound reporting.
#[derive(Clone, Debug)]
pub struct Federation {
    pub clients: Vec<ClientState>,
    pub w_star: Option<ParamVector>,
    pub constants: SmoothnessConstants,
}

impl Federation {
    pub fn new(
        clients: Vec<ClientState>,
        w_star: Option<ParamVector>,
        constants: SmoothnessConstants,
    ) -> Result<Self> {
        let first = clients
            .first()
            .ok_or_else(|| Error::invalid("federation has no clients"))?;
        let dim = first.objective.dim();
        for c in &clients {
            if c.objective.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: c.objective.dim(),
                });
            }
        }
        let sum: f64 = clients.iter().map(|c| c.weight).sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::WeightSum { sum });
        }
        let fed = Self {
            clients,
            w_star,
            constants,
        };
        if let Some(star) = &fed.w_star {
            star.ensure_dim(dim)?;
            let g = fed.global_gradient(star)?.norm();
            if g > OPTIMUM_TOL {
                return Err(Error::invalid(format!(
                    "w_star is not stationary: ‖Σ ωᵢ ∇Fᵢ(w*)‖ = {g:e}"
                )));
            }
        }
        Ok(fed)
    }

    pub fn dim(&self) -> usize {
        self.clients[0].objective.dim()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.clients.iter().map(|c| c.weight).collect()
    }

    pub fn global_loss(&self, w: &ParamVector) -> Result<f64> {
        self.clients
            .iter()
            .map(|c| Ok(c.weight * c.objective.value(w)?))
            .sum()
    }

    pub fn global_gradient(&self, w: &ParamVector) -> Result<ParamVector> {
        let mut g = ParamVector::zeros(self.dim());
        for c in &self.clients {
            g.axpy(c.weight, &c.objective.gradient(w)?);
        }
        Ok(g)
    }

    /// Sample-weighted accuracy over all clients with labelled data.
    pub fn global_accuracy(&self, w: &ParamVector) -> Result<Option<f64>> {
        let mut correct = 0.0;
        let mut total = 0usize;
        for c in &self.clients {
            if let (Some(acc), Some(n)) = (c.objective.accuracy(w)?, c.objective.num_samples()) {
                correct += acc * n as f64;
                total += n;
            }
        }
        Ok((total > 0).then(|| correct / total as f64))
    }

    pub fn cost_model(&self, budget: f64) -> Result<CostModel> {
        CostModel::new(
            self.clients.iter().map(|c| c.step_cost).collect(),
            self.clients.iter().map(|c| c.comm_delay).collect(),
            budget,
        )
    }

    /// Simulated duration of a round with the given step counts.
    pub fn round_time(&self, steps: &[usize], clock: ClockMode) -> f64 {
        let per_client = self
            .clients
            .iter()
            .zip(steps)
            .map(|(c, &t)| c.step_cost * t as f64 + c.comm_delay);
        match clock {
            ClockMode::Additive => per_client.sum(),
            ClockMode::ParallelMax => per_client.fold(0.0, f64::max),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    /// `Σᵢ (cᵢ tᵢ + bᵢ)`
    #[default]
    Additive,
    /// `maxᵢ (cᵢ tᵢ + bᵢ)`
    ParallelMax,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    Rounds(usize),
    /// Total simulated seconds; a round that would overrun is not started.
    TimeBudget(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub eta: f64,
    pub stop: StopRule,
    /// Per-round budget `S` for budgeted schedules.
    pub round_budget: Option<f64>,
    pub clock: ClockMode,
    pub initial_model: Option<ParamVector>,
    pub divergence_threshold: f64,
}

impl RunConfig {
    pub fn rounds(eta: f64, rounds: usize) -> Self {
        Self {
            eta,
            stop: StopRule::Rounds(rounds),
            round_budget: None,
            clock: ClockMode::Additive,
            initial_model: None,
            divergence_threshold: DEFAULT_DIVERGENCE_THRESHOLD,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ScheduleSource {
    /// Same step count for every client, every round.
    Constant(usize),
    PerClient(Vec<usize>),
    /// Greedy budgeted plan recomputed each round. Without explicit params,
    /// `α = 2η√μ·Gₖ` and `β = ½η²L²G²` are derived with `Gₖ = ‖∇F(w⁽ᵏ⁾)‖`.
    Greedy {
        mode: ScheduleMode,
        params: Option<ScheduleParams>,
    },
}

impl ScheduleSource {
    pub fn greedy() -> Self {
        ScheduleSource::Greedy {
            mode: ScheduleMode::FillBudget,
            params: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    BudgetExhausted,
    Diverged { round: usize, norm: f64 },
}

impl RunStatus {
    pub fn label(&self) -> &'static str {
        match self {
            RunStatus::Completed => "completed",
            RunStatus::BudgetExhausted => "budget_exhausted",
            RunStatus::Diverged { .. } => "diverged",
        }
    }
}

#[derive(Clone, Debug)]
pub struct RoundRecord {
    pub trace: RoundTrace,
    pub steps: Vec<usize>,
    pub plan: Option<StepPlan>,
    pub schedule_params: Option<ScheduleParams>,
    pub round_time: f64,
    pub sim_time: f64,
    pub loss: f64,
    pub accuracy: Option<f64>,
    pub error_sq: Option<f64>,
    /// Drift-free residual term `η²G²E² + η²L²G²D²` from the federation
    /// constants.
    pub delta_k: f64,
    pub identity_residual: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct History {
    pub strategy: Strategy,
    pub initial: ParamVector,
    pub initial_loss: f64,
    pub initial_accuracy: Option<f64>,
    pub initial_error_sq: Option<f64>,
    pub rounds: Vec<RoundRecord>,
    pub status: RunStatus,
}

impl History {
    pub fn final_model(&self) -> &ParamVector {
        self.rounds
            .last()
            .map(|r| &r.trace.w_end)
            .unwrap_or(&self.initial)
    }

    pub fn final_error_sq(&self) -> Option<f64> {
        self.rounds
            .last()
            .map_or(self.initial_error_sq, |r| r.error_sq)
    }

    pub fn sim_time(&self) -> f64 {
        self.rounds.last().map_or(0.0, |r| r.sim_time)
    }
}

fn plan_round(
    fed: &Federation,
    cfg: &RunConfig,
    source: &ScheduleSource,
    w: &ParamVector,
) -> Result<(Vec<usize>, Option<StepPlan>, Option<ScheduleParams>)> {
    let n = fed.clients.len();
    match source {
        ScheduleSource::Constant(t) => {
            if *t == 0 {
                return Err(Error::invalid("constant schedule needs t >= 1"));
            }
            Ok((vec![*t; n], None, None))
        }
        ScheduleSource::PerClient(steps) => {
            if steps.len() != n || steps.contains(&0) {
                return Err(Error::invalid(
                    "per-client schedule needs one positive count per client",
                ));
            }
            Ok((steps.clone(), None, None))
        }
        ScheduleSource::Greedy { mode, params } => {
            let budget = cfg
                .round_budget
                .ok_or_else(|| Error::invalid("greedy schedule needs a per-round budget"))?;
            let params = match params {
                Some(p) => *p,
                None => {
                    let c = &fed.constants;
                    let g_k = fed.global_gradient(w)?.norm();
                    ScheduleParams::derive(cfg.eta, c.mu, c.lipschitz, c.grad_bound, g_k)?
                }
            };
            let plan = schedule(&fed.cost_model(budget)?, &fed.weights(), &params, *mode)?;
            Ok((plan.steps.clone(), Some(plan), Some(params)))
        }
    }
}

/// Runs rounds of broadcast, local updates and aggregation until the stop
/// rule fires or the iterate diverges.
pub fn run_rounds(
    fed: &Federation,
    cfg: &RunConfig,
    strategy: &Strategy,
    source: &ScheduleSource,
) -> Result<History> {
    if !(cfg.eta >= 0.0 && cfg.eta.is_finite()) {
        return Err(Error::invalid(format!(
            "step size must be nonnegative, got {}",
            cfg.eta
        )));
    }
    let dim = fed.dim();
    let mut w = cfg
        .initial_model
        .clone()
        .unwrap_or_else(|| ParamVector::zeros(dim));
    w.ensure_dim(dim)?;
    w.ensure_finite("initial model")?;
    let mut runner = StrategyRunner::new(*strategy, fed.clients.len(), dim)?;
    let weights = fed.weights();
    let c = fed.constants;
    let identity_applies = strategy.is_plain_averaging();

    let mut history = History {
        strategy: *strategy,
        initial_loss: fed.global_loss(&w)?,
        initial_accuracy: fed.global_accuracy(&w)?,
        initial_error_sq: fed.w_star.as_ref().map(|s| (&w - s).norm_squared()),
        initial: w.clone(),
        rounds: Vec::new(),
        status: RunStatus::Completed,
    };
    let mut sim_time = 0.0;

    for round in 0..MAX_ROUNDS {
        if let StopRule::Rounds(k) = cfg.stop {
            if round >= k {
                break;
            }
        }
        let (steps, plan, params) = plan_round(fed, cfg, source, &w)?;
        let round_time = fed.round_time(&steps, cfg.clock);
        if let StopRule::TimeBudget(total) = cfg.stop {
            if sim_time + round_time > total {
                history.status = RunStatus::BudgetExhausted;
                break;
            }
        }

        let mut locals = Vec::with_capacity(fed.clients.len());
        let mut traces = Vec::with_capacity(fed.clients.len());
        let mut failure = None;
        for (i, client) in fed.clients.iter().enumerate() {
            let grad = client.objective.gradient(&w)?;
            match runner.local_update(
                i,
                &client.objective,
                &w,
                steps[i],
                cfg.eta,
                cfg.divergence_threshold,
            ) {
                Ok((local, drift)) => {
                    traces.push(ClientTrace {
                        client: client.id,
                        weight: client.weight,
                        steps: steps[i],
                        deviation: &local - &w,
                        final_model: local.clone(),
                        gradient_at_global: grad,
                        drift,
                    });
                    locals.push(local);
                }
                Err(Error::Diverged { norm, .. }) => {
                    failure = Some(norm);
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        let next = match failure {
            None => runner.aggregate(&w, &locals, &weights, &steps)?,
            Some(norm) => {
                warn!("{} diverged in round {round}", strategy.name());
                history.status = RunStatus::Diverged { round, norm };
                break;
            }
        };
        let norm = next.norm();
        if !norm.is_finite() || norm > cfg.divergence_threshold {
            warn!("{} diverged in round {round}", strategy.name());
            history.status = RunStatus::Diverged { round, norm };
            break;
        }

        let trace = RoundTrace::new(round, cfg.eta, w, next.clone(), traces, fed.w_star.as_ref())?;
        let identity_residual = if identity_applies && fed.w_star.is_some() {
            Some(error_identity_check(&trace, cfg.eta)?)
        } else {
            None
        };
        let agg = trace.aggregates;
        let eg2 = (cfg.eta * c.grad_bound).powi(2);
        let delta_k = eg2 * agg.e * agg.e + eg2 * c.lipschitz * c.lipschitz * agg.schedule_d2;
        sim_time += round_time;
        let record = RoundRecord {
            loss: fed.global_loss(&next)?,
            accuracy: fed.global_accuracy(&next)?,
            error_sq: trace.error_after.as_ref().map(|e| e.norm_squared()),
            trace,
            steps,
            plan,
            schedule_params: params,
            round_time,
            sim_time,
            delta_k,
            identity_residual,
        };
        debug!(
            "round {round}: t={:?} loss={:.6e}",
            record.steps, record.loss
        );
        history.rounds.push(record);
        w = next;
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::ObjectiveSpec;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::from_slice(v)
    }

    fn shifted_federation(n: usize) -> Federation {
        let clients = (0..n)
            .map(|i| {
                let obj = ObjectiveSpec::quadratic_centered(DMatrix::identity(1, 1), &pv(&[3.0]))
                    .unwrap();
                ClientState::new(i, 1.0 / n as f64, 1.0, 0.5, obj).unwrap()
            })
            .collect();
        Federation::new(
            clients,
            Some(pv(&[3.0])),
            SmoothnessConstants::new(1.0, 1.0, 3.0),
        )
        .unwrap()
    }

    #[test]
    fn geometric_contraction() {
        let fed = shifted_federation(1);
        let h = run_rounds(
            &fed,
            &RunConfig::rounds(0.1, 50),
            &Strategy::Fedavg,
            &ScheduleSource::Constant(1),
        )
        .unwrap();
        let ratio = (h.final_error_sq().unwrap() / h.initial_error_sq.unwrap()).sqrt();
        assert_relative_eq!(ratio, 0.9_f64.powi(50), max_relative = 1e-9);
    }

    #[test]
    fn zero_rounds_keeps_initial_state() {
        let fed = shifted_federation(1);
        let h = run_rounds(
            &fed,
            &RunConfig::rounds(0.1, 0),
            &Strategy::Amsfl,
            &ScheduleSource::Constant(3),
        )
        .unwrap();
        assert!(h.rounds.is_empty());
        assert_eq!(h.final_model(), &pv(&[0.0]));
        assert_eq!(h.status, RunStatus::Completed);
    }

    #[test]
    fn identical_clients_match_single_client() {
        let cfg = RunConfig::rounds(0.1, 10);
        let a = run_rounds(
            &shifted_federation(1),
            &cfg,
            &Strategy::Fedavg,
            &ScheduleSource::Constant(3),
        )
        .unwrap();
        let b = run_rounds(
            &shifted_federation(2),
            &cfg,
            &Strategy::Fedavg,
            &ScheduleSource::Constant(3),
        )
        .unwrap();
        for (x, y) in a.rounds.iter().zip(&b.rounds) {
            assert_eq!(x.trace.w_end, y.trace.w_end);
        }
    }

    #[test]
    fn additive_clock_and_time_budget() {
        let fed = shifted_federation(2);
        let mut cfg = RunConfig::rounds(0.1, 0);
        cfg.stop = StopRule::TimeBudget(20.0);
        let h = run_rounds(&fed, &cfg, &Strategy::Fedavg, &ScheduleSource::Constant(2)).unwrap();
        // each round: 2 × (1·2 + 0.5) = 5 s
        assert_eq!(h.rounds.len(), 4);
        assert_eq!(h.sim_time(), 20.0);
        assert_eq!(h.status, RunStatus::BudgetExhausted);
        for r in &h.rounds {
            assert_eq!(r.round_time, 5.0);
        }

        cfg.clock = ClockMode::ParallelMax;
        let h = run_rounds(&fed, &cfg, &Strategy::Fedavg, &ScheduleSource::Constant(2)).unwrap();
        assert_eq!(h.rounds.len(), 8);
    }

    #[test]
    fn greedy_rounds_respect_budget() {
        let fed = shifted_federation(2);
        let mut cfg = RunConfig::rounds(0.1, 5);
        cfg.round_budget = Some(7.3);
        let h = run_rounds(&fed, &cfg, &Strategy::Amsfl, &ScheduleSource::greedy()).unwrap();
        for r in &h.rounds {
            assert!(r.round_time <= 7.3);
            assert!(r.identity_residual.unwrap() <= 1e-12);
            assert!(r.schedule_params.unwrap().derivation.is_some());
        }
        cfg.round_budget = None;
        assert!(run_rounds(&fed, &cfg, &Strategy::Amsfl, &ScheduleSource::greedy()).is_err());
    }

    #[test]
    fn divergence_is_recorded() {
        let fed = shifted_federation(1);
        let h = run_rounds(
            &fed,
            &RunConfig::rounds(2.5, 200),
            &Strategy::Fedavg,
            &ScheduleSource::Constant(5),
        )
        .unwrap();
        assert!(matches!(h.status, RunStatus::Diverged { .. }));
    }

    #[test]
    fn rejects_non_stationary_optimum() {
        let obj = ObjectiveSpec::quadratic_centered(DMatrix::identity(1, 1), &pv(&[3.0])).unwrap();
        let clients = vec![ClientState::new(0, 1.0, 1.0, 0.0, obj).unwrap()];
        assert!(Federation::new(
            clients,
            Some(pv(&[2.0])),
            SmoothnessConstants::new(1.0, 1.0, 1.0)
        )
        .is_err());
    }
}
