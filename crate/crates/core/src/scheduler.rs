//! Time-budgeted local step allocation.
//!
//! A round costs `Σᵢ (cᵢ tᵢ + bᵢ)` simulated seconds. The error cost of a plan
//! is `α Σ ωᵢ tᵢ + β Σ ωᵢ tᵢ(tᵢ − 1)/2`. The greedy scheduler starts every
//! client at one step and keeps adding the step with the smallest incremental
//! error per second of compute until no step fits in the budget. A
//! brute-force enumeration over maximal plans serves as its oracle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper limits for [`brute_force_schedule`].
pub const BRUTE_FORCE_MAX_CLIENTS: usize = 6;
pub const BRUTE_FORCE_MAX_STEPS: usize = 64;

const TIE_REL_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub step_costs: Vec<f64>,
    pub comm_delays: Vec<f64>,
    pub budget: f64,
}

impl CostModel {
    pub fn new(step_costs: Vec<f64>, comm_delays: Vec<f64>, budget: f64) -> Result<Self> {
        let model = Self {
            step_costs,
            comm_delays,
            budget,
        };
        model.validate()?;
        Ok(model)
    }

    /// Checks shapes and signs, and that the one-step-per-client plan fits.
    pub fn validate(&self) -> Result<()> {
        if self.step_costs.is_empty() {
            return Err(Error::invalid("cost model has no clients"));
        }
        if self.step_costs.len() != self.comm_delays.len() {
            return Err(Error::DimensionMismatch {
                expected: self.step_costs.len(),
                found: self.comm_delays.len(),
            });
        }
        if self.step_costs.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
            return Err(Error::invalid("step costs must be positive and finite"));
        }
        if self
            .comm_delays
            .iter()
            .any(|&b| !(b >= 0.0 && b.is_finite()))
        {
            return Err(Error::invalid(
                "communication delays must be nonnegative and finite",
            ));
        }
        if !(self.budget > 0.0 && self.budget.is_finite()) {
            return Err(Error::invalid(format!(
                "budget must be positive, got {}",
                self.budget
            )));
        }
        let required = self.minimum_time();
        if required > self.budget {
            return Err(Error::InfeasibleBudget {
                required,
                budget: self.budget,
            });
        }
        Ok(())
    }

    pub fn num_clients(&self) -> usize {
        self.step_costs.len()
    }

    /// `Σᵢ (cᵢ tᵢ + bᵢ)`, summed in client order. Every feasibility decision
    /// in this module goes through this function.
    pub fn plan_time(&self, steps: &[usize]) -> f64 {
        self.step_costs
            .iter()
            .zip(&self.comm_delays)
            .zip(steps)
            .map(|((&c, &b), &t)| c * t as f64 + b)
            .sum()
    }

    pub fn minimum_time(&self) -> f64 {
        self.plan_time(&vec![1; self.num_clients()])
    }

    pub fn is_feasible(&self, steps: &[usize]) -> bool {
        steps.len() == self.num_clients()
            && steps.iter().all(|&t| t >= 1)
            && self.plan_time(steps) <= self.budget
    }

    /// A feasible plan is maximal when no single extra step fits.
    pub fn is_maximal(&self, steps: &[usize]) -> bool {
        let mut probe = steps.to_vec();
        (0..steps.len()).all(|i| {
            probe[i] += 1;
            let over = self.plan_time(&probe) > self.budget;
            probe[i] -= 1;
            over
        })
    }

    /// Compute time left after communication, `S − Σ bᵢ`.
    pub fn compute_budget(&self) -> f64 {
        self.budget - self.comm_delays.iter().sum::<f64>()
    }
}

/// Where `α` and `β` came from when derived from problem constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamDerivation {
    pub eta: f64,
    pub mu: f64,
    pub lipschitz: f64,
    pub grad_bound: f64,
    pub g_k: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub alpha: f64,
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derivation: Option<ParamDerivation>,
}

impl ScheduleParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite() && beta >= 0.0 && beta.is_finite()) {
            return Err(Error::invalid(format!(
                "schedule weights must be nonnegative, got alpha={alpha} beta={beta}"
            )));
        }
        Ok(Self {
            alpha,
            beta,
            derivation: None,
        })
    }

    /// `α = 2η√μ·G_k`, `β = ½η²L²G²`.
    pub fn derive(eta: f64, mu: f64, lipschitz: f64, grad_bound: f64, g_k: f64) -> Result<Self> {
        let mut p = Self::new(
            2.0 * eta * mu.max(0.0).sqrt() * g_k,
            0.5 * eta * eta * lipschitz * lipschitz * grad_bound * grad_bound,
        )?;
        p.derivation = Some(ParamDerivation {
            eta,
            mu,
            lipschitz,
            grad_bound,
            g_k,
        });
        Ok(p)
    }

    /// Residual term `η²G²E² + η²L²G²·D²` when the derivation is known.
    pub fn delta_k(&self, e: f64, schedule_d2: f64) -> Option<f64> {
        self.derivation.map(|d| {
            let eg = d.eta * d.grad_bound;
            eg * eg * e * e + eg * eg * d.lipschitz * d.lipschitz * schedule_d2
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    /// Spend the whole budget, adding steps in cheapest-error order.
    #[default]
    FillBudget,
    /// Literal minimization of the error cost, which is increasing in every
    /// `tᵢ`; always returns one step per client.
    MinimizeOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepPlan {
    pub steps: Vec<usize>,
    pub total_time: f64,
    pub objective_value: f64,
    pub e: f64,
    pub schedule_d2: f64,
    pub delta_k: Option<f64>,
}

impl StepPlan {
    pub fn evaluate(
        steps: Vec<usize>,
        cost: &CostModel,
        weights: &[f64],
        params: &ScheduleParams,
    ) -> Result<Self> {
        let objective_value = error_cost(&steps, weights, params)?;
        let (e, schedule_d2) = schedule_aggregates(&steps, weights);
        Ok(Self {
            total_time: cost.plan_time(&steps),
            objective_value,
            e,
            schedule_d2,
            delta_k: params.delta_k(e, schedule_d2),
            steps,
        })
    }
}

/// `E = Σ ωᵢ tᵢ` and `D² = Σ ωᵢ tᵢ(tᵢ − 1)/2`.
pub fn schedule_aggregates(steps: &[usize], weights: &[f64]) -> (f64, f64) {
    steps
        .iter()
        .zip(weights)
        .fold((0.0, 0.0), |(e, d2), (&t, &w)| {
            let t = t as f64;
            (e + w * t, d2 + w * t * (t - 1.0) / 2.0)
        })
}

pub fn error_cost(steps: &[usize], weights: &[f64], params: &ScheduleParams) -> Result<f64> {
    if steps.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: weights.len(),
            found: steps.len(),
        });
    }
    if steps.contains(&0) {
        return Err(Error::invalid("every client needs at least one step"));
    }
    let (e, d2) = schedule_aggregates(steps, weights);
    Ok(params.alpha * e + params.beta * d2)
}

/// Marginal error cost of client `i`'s next step per second of compute.
pub fn incremental_ratio(
    weight: f64,
    steps: usize,
    step_cost: f64,
    params: &ScheduleParams,
) -> f64 {
    let t = steps as f64;
    (params.alpha * weight + params.beta * weight * (2.0 * t - 1.0) / 2.0) / step_cost
}

fn check_weights(cost: &CostModel, weights: &[f64]) -> Result<()> {
    if weights.len() != cost.num_clients() {
        return Err(Error::DimensionMismatch {
            expected: cost.num_clients(),
            found: weights.len(),
        });
    }
    if weights.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
        return Err(Error::invalid(
            "client weights must be nonnegative and finite",
        ));
    }
    Ok(())
}

/// Adds steps to `steps` in greedy order until the plan is maximal.
fn fill_greedy(cost: &CostModel, weights: &[f64], params: &ScheduleParams, steps: &mut [usize]) {
    loop {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..steps.len() {
            steps[i] += 1;
            let fits = cost.plan_time(steps) <= cost.budget;
            steps[i] -= 1;
            if !fits {
                continue;
            }
            let ratio = incremental_ratio(weights[i], steps[i], cost.step_costs[i], params);
            // strict comparison keeps the lowest index on ties
            if best.is_none_or(|(_, r)| ratio < r) {
                best = Some((i, ratio));
            }
        }
        match best {
            Some((i, _)) => steps[i] += 1,
            None => break,
        }
    }
}

pub fn schedule(
    cost: &CostModel,
    weights: &[f64],
    params: &ScheduleParams,
    mode: ScheduleMode,
) -> Result<StepPlan> {
    cost.validate()?;
    check_weights(cost, weights)?;
    let mut steps = vec![1; cost.num_clients()];
    if mode == ScheduleMode::FillBudget {
        fill_greedy(cost, weights, params, &mut steps);
    }
    StepPlan::evaluate(steps, cost, weights, params)
}

pub fn greedy_schedule(
    cost: &CostModel,
    weights: &[f64],
    params: &ScheduleParams,
) -> Result<StepPlan> {
    schedule(cost, weights, params, ScheduleMode::FillBudget)
}

fn brute_force_bounds(cost: &CostModel) -> Result<usize> {
    cost.validate()?;
    if cost.num_clients() > BRUTE_FORCE_MAX_CLIENTS {
        return Err(Error::SearchSpaceTooLarge(format!(
            "{} clients exceeds the limit of {BRUTE_FORCE_MAX_CLIENTS}",
            cost.num_clients()
        )));
    }
    let min_cost = cost
        .step_costs
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let max_steps = (cost.compute_budget() / min_cost).floor();
    if max_steps > BRUTE_FORCE_MAX_STEPS as f64 {
        return Err(Error::SearchSpaceTooLarge(format!(
            "up to {max_steps} steps per client exceeds the limit of {BRUTE_FORCE_MAX_STEPS}"
        )));
    }
    Ok(max_steps.max(1.0) as usize)
}

/// All feasible maximal plans in lexicographic order.
pub fn enumerate_maximal_plans(cost: &CostModel) -> Result<Vec<Vec<usize>>> {
    let max_steps = brute_force_bounds(cost)?;
    let mut out = Vec::new();
    let mut steps = vec![1; cost.num_clients()];
    enumerate_rec(cost, max_steps, 0, &mut steps, &mut out);
    Ok(out)
}

fn enumerate_rec(
    cost: &CostModel,
    max_steps: usize,
    client: usize,
    steps: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if client == steps.len() {
        if cost.is_maximal(steps) {
            out.push(steps.clone());
        }
        return;
    }
    for t in 1..=max_steps {
        steps[client] = t;
        // remaining clients sit at one step, so this is the cheapest completion
        if cost.plan_time(steps) > cost.budget {
            break;
        }
        enumerate_rec(cost, max_steps, client + 1, steps, out);
    }
    steps[client] = 1;
}

/// Exhaustive minimizer of the error cost over maximal feasible plans; ties
/// go to the lexicographically smallest plan.
pub fn brute_force_schedule(
    cost: &CostModel,
    weights: &[f64],
    params: &ScheduleParams,
) -> Result<StepPlan> {
    check_weights(cost, weights)?;
    let mut best: Option<(Vec<usize>, f64)> = None;
    for plan in enumerate_maximal_plans(cost)? {
        let value = error_cost(&plan, weights, params)?;
        let better = match &best {
            None => true,
            Some((_, b)) => value < *b - TIE_REL_TOL * b.abs().max(1.0),
        };
        if better {
            best = Some((plan, value));
        }
    }
    let (steps, _) = best.ok_or_else(|| Error::invalid("no feasible plan"))?;
    StepPlan::evaluate(steps, cost, weights, params)
}

/// Continuous allocation `tᵢ* ∝ (1/(cᵢ ωᵢ))^{1/2}` scaled so that
/// `Σ cᵢ tᵢ* = compute_budget`.
pub fn continuous_allocation(
    step_costs: &[f64],
    weights: &[f64],
    compute_budget: f64,
) -> Result<Vec<f64>> {
    if step_costs.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: step_costs.len(),
            found: weights.len(),
        });
    }
    if step_costs.is_empty() {
        return Err(Error::invalid("no clients"));
    }
    if step_costs
        .iter()
        .chain(weights)
        .any(|&x| !(x > 0.0 && x.is_finite()))
    {
        return Err(Error::invalid("costs and weights must be positive"));
    }
    if !(compute_budget > 0.0) {
        return Err(Error::invalid(format!(
            "no budget slack for local steps ({compute_budget})"
        )));
    }
    let raw: Vec<f64> = step_costs
        .iter()
        .zip(weights)
        .map(|(&c, &w)| (1.0 / (c * w)).sqrt())
        .collect();
    let spend: f64 = raw.iter().zip(step_costs).map(|(t, c)| t * c).sum();
    let scale = compute_budget / spend;
    Ok(raw.into_iter().map(|t| t * scale).collect())
}

/// Continuous allocation for a full cost model, using `S − Σ bᵢ` as the
/// compute budget.
pub fn continuous_allocation_for(cost: &CostModel, weights: &[f64]) -> Result<Vec<f64>> {
    continuous_allocation(&cost.step_costs, weights, cost.compute_budget())
}

/// Rounds a continuous allocation to integers (at least one step each),
/// removes the costliest-error steps until feasible, then completes it
/// greedily to a maximal plan.
pub fn round_and_repair(
    cost: &CostModel,
    weights: &[f64],
    params: &ScheduleParams,
    continuous: &[f64],
) -> Result<StepPlan> {
    cost.validate()?;
    check_weights(cost, weights)?;
    if continuous.len() != cost.num_clients() {
        return Err(Error::DimensionMismatch {
            expected: cost.num_clients(),
            found: continuous.len(),
        });
    }
    let mut steps: Vec<usize> = continuous
        .iter()
        .map(|&x| x.round().max(1.0) as usize)
        .collect();
    while cost.plan_time(&steps) > cost.budget {
        let drop = (0..steps.len())
            .filter(|&i| steps[i] > 1)
            .max_by(|&a, &b| {
                let ra = incremental_ratio(weights[a], steps[a] - 1, cost.step_costs[a], params);
                let rb = incremental_ratio(weights[b], steps[b] - 1, cost.step_costs[b], params);
                ra.total_cmp(&rb).then(b.cmp(&a))
            })
            .expect("minimum plan is feasible after validation");
        steps[drop] -= 1;
    }
    fill_greedy(cost, weights, params, &mut steps);
    StepPlan::evaluate(steps, cost, weights, params)
}

/// Equal step count for every client at the largest feasible level.
pub fn uniform_plan(cost: &CostModel) -> Result<Vec<usize>> {
    cost.validate()?;
    let n = cost.num_clients();
    let mut level = 1;
    while cost.plan_time(&vec![level + 1; n]) <= cost.budget {
        level += 1;
    }
    Ok(vec![level; n])
}
