//! Broadcast, multi-step local descent and weighted aggregation.
//!
//! One round starts every client from the global model `w⁽ᵏ⁾`, runs `tᵢ`
//! full-batch gradient steps locally and averages the results with weights
//! `ωᵢ`. The [`RoundTrace`] of a round keeps everything needed to check the
//! exact error identity
//!
//! ```text
//! e⁽ᵏ⁺¹⁾ = e⁽ᵏ⁾ − η Σ ωᵢ tᵢ ∇Fᵢ(w⁽ᵏ⁾) − η Σ ωᵢ Δᵢ
//! ```
//!
//! and the recursion bounds built on top of it.

mod bounds;
mod run;

pub use bounds::{
    linearized_residual_bound, recursion_bound_report, residual_limit, DriftFreeCheck,
    LinearizedCheck, RecursionReport,
};
pub use run::{
    run_rounds, ClockMode, Federation, History, RoundRecord, RunConfig, RunStatus, ScheduleSource,
    StopRule, DEFAULT_DIVERGENCE_THRESHOLD,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gda::DriftRecord;
use crate::objectives::ObjectiveSpec;
use crate::vector::ParamVector;

const WEIGHT_SUM_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct ClientState {
    pub id: usize,
    pub weight: f64,
    pub step_cost: f64,
    pub comm_delay: f64,
    pub objective: ObjectiveSpec,
    pub steps: usize,
}

impl ClientState {
    pub fn new(
        id: usize,
        weight: f64,
        step_cost: f64,
        comm_delay: f64,
        objective: ObjectiveSpec,
    ) -> Result<Self> {
        if !(weight > 0.0 && weight <= 1.0) {
            return Err(Error::invalid(format!(
                "client {id}: weight {weight} outside (0, 1]"
            )));
        }
        if !(step_cost > 0.0 && step_cost.is_finite()) {
            return Err(Error::invalid(format!(
                "client {id}: step cost must be positive"
            )));
        }
        if !(comm_delay >= 0.0 && comm_delay.is_finite()) {
            return Err(Error::invalid(format!(
                "client {id}: comm delay must be nonnegative"
            )));
        }
        Ok(Self {
            id,
            weight,
            step_cost,
            comm_delay,
            objective,
            steps: 1,
        })
    }
}

/// Divergence marker raised by local loops; the run loop fills in the round.
pub(crate) fn diverged(norm: f64) -> Error {
    Error::Diverged { round: 0, norm }
}

/// `t` gradient steps from `w_start` along `∇F(w) + correction(w)`.
///
/// The drift record always tracks the plain objective gradient, so baselines
/// with corrected directions still report comparable drift.
pub(crate) fn descend<C>(
    obj: &ObjectiveSpec,
    w_start: &ParamVector,
    steps: usize,
    eta: f64,
    divergence_threshold: f64,
    mut correction: C,
) -> Result<(ParamVector, DriftRecord)>
where
    C: FnMut(&ParamVector, &mut ParamVector),
{
    if steps == 0 {
        return Err(Error::invalid("local update needs at least one step"));
    }
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::invalid(format!(
            "step size must be nonnegative, got {eta}"
        )));
    }
    let mut w = w_start.clone();
    let mut per_step = Vec::with_capacity(steps);
    let mut g0: Option<ParamVector> = None;
    for _ in 0..steps {
        let mut g = obj.gradient(&w)?;
        let base = g0.get_or_insert_with(|| g.clone());
        per_step.push(&g - base);
        correction(&w, &mut g);
        w.axpy(-eta, &g);
        let norm = w.norm();
        if !norm.is_finite() || norm > divergence_threshold {
            return Err(diverged(norm));
        }
    }
    Ok((w, DriftRecord::from_steps(per_step)?))
}

/// Plain multi-step local gradient descent from the broadcast model.
pub fn local_multistep_sgd(
    client: &ClientState,
    w_global: &ParamVector,
    steps: usize,
    eta: f64,
) -> Result<(ParamVector, DriftRecord)> {
    descend(
        &client.objective,
        w_global,
        steps,
        eta,
        DEFAULT_DIVERGENCE_THRESHOLD,
        |_, _| {},
    )
}

pub(crate) fn check_weight_sum<I: IntoIterator<Item = f64>>(weights: I) -> Result<()> {
    let sum: f64 = weights.into_iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::WeightSum { sum });
    }
    Ok(())
}

/// `Σ ωᵢ wᵢ`
pub fn aggregate(models: &[(f64, &ParamVector)]) -> Result<ParamVector> {
    let first = models
        .first()
        .ok_or_else(|| Error::invalid("nothing to aggregate"))?;
    check_weight_sum(models.iter().map(|(w, _)| *w))?;
    ParamVector::weighted_sum(first.1.dim(), models.iter().map(|(w, m)| (*w, *m)))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClientTrace {
    pub client: usize,
    pub weight: f64,
    pub steps: usize,
    pub final_model: ParamVector,
    /// `δᵢ = wᵢ⁽ᵗⁱ⁾ − w⁽ᵏ⁾`
    pub deviation: ParamVector,
    pub gradient_at_global: ParamVector,
    pub drift: DriftRecord,
}

/// Round-level aggregates. `schedule_d2` is the schedule quantity
/// `Σ ωᵢ tᵢ(tᵢ−1)/2`; `realized_d` is the drift norm `‖Σ ωᵢ Δᵢ‖`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RoundAggregates {
    pub e: f64,
    pub schedule_d2: f64,
    /// `‖Σ ωᵢ tᵢ ∇Fᵢ(w⁽ᵏ⁾)‖`
    pub g_k: f64,
    pub realized_d: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RoundTrace {
    pub round: usize,
    pub eta: f64,
    pub w_start: ParamVector,
    pub w_end: ParamVector,
    pub clients: Vec<ClientTrace>,
    pub error_before: Option<ParamVector>,
    pub error_after: Option<ParamVector>,
    pub aggregates: RoundAggregates,
}

impl RoundTrace {
    pub fn new(
        round: usize,
        eta: f64,
        w_start: ParamVector,
        w_end: ParamVector,
        clients: Vec<ClientTrace>,
        w_star: Option<&ParamVector>,
    ) -> Result<Self> {
        let dim = w_start.dim();
        let weighted_grad = ParamVector::weighted_sum(
            dim,
            clients
                .iter()
                .map(|c| (c.weight * c.steps as f64, &c.gradient_at_global)),
        )?;
        let weighted_drift = ParamVector::weighted_sum(
            dim,
            clients.iter().map(|c| (c.weight, &c.drift.cumulative)),
        )?;
        let (e, schedule_d2) = crate::scheduler::schedule_aggregates(
            &clients.iter().map(|c| c.steps).collect::<Vec<_>>(),
            &clients.iter().map(|c| c.weight).collect::<Vec<_>>(),
        );
        let aggregates = RoundAggregates {
            e,
            schedule_d2,
            g_k: weighted_grad.norm(),
            realized_d: weighted_drift.norm(),
        };
        Ok(Self {
            round,
            eta,
            error_before: w_star.map(|s| &w_start - s),
            error_after: w_star.map(|s| &w_end - s),
            w_start,
            w_end,
            clients,
            aggregates,
        })
    }

    /// `‖(w⁽ᵏ⁺¹⁾ − w⁽ᵏ⁾) − Σ ωᵢ δᵢ‖`; zero up to rounding for plain averaging.
    pub fn aggregation_residual(&self) -> Result<f64> {
        let step = &self.w_end - &self.w_start;
        let combined = ParamVector::weighted_sum(
            step.dim(),
            self.clients.iter().map(|c| (c.weight, &c.deviation)),
        )?;
        Ok((&step - &combined).norm())
    }

    /// `Σ ωᵢ ∇Fᵢ(w⁽ᵏ⁾)`
    pub fn global_gradient(&self) -> Result<ParamVector> {
        ParamVector::weighted_sum(
            self.w_start.dim(),
            self.clients
                .iter()
                .map(|c| (c.weight, &c.gradient_at_global)),
        )
    }
}

/// Residual of the exact aggregated error identity for one round.
pub fn error_identity_check(trace: &RoundTrace, eta: f64) -> Result<f64> {
    let (Some(before), Some(after)) = (&trace.error_before, &trace.error_after) else {
        return Err(Error::MissingOptimum);
    };
    let mut predicted = before.clone();
    for c in &trace.clients {
        predicted.axpy(-eta * c.weight * c.steps as f64, &c.gradient_at_global);
        predicted.axpy(-eta * c.weight, &c.drift.cumulative);
    }
    Ok((after - &predicted).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::from_slice(v)
    }

    /// F = ½(w − 3)²
    fn shifted_client() -> ClientState {
        let obj = ObjectiveSpec::quadratic_centered(DMatrix::identity(1, 1), &pv(&[3.0])).unwrap();
        ClientState::new(0, 1.0, 1.0, 0.0, obj).unwrap()
    }

    #[test]
    fn local_sgd_hand_iteration() {
        let (w, drift) = local_multistep_sgd(&shifted_client(), &pv(&[0.0]), 2, 0.1).unwrap();
        assert_relative_eq!(w[0], 0.57, epsilon = 1e-15);
        assert_eq!(drift.per_step.len(), 2);
        assert!(drift.per_step[0].is_zero());
        assert_relative_eq!(drift.per_step[1][0], 0.3, epsilon = 1e-15);
    }

    #[test]
    fn local_sgd_single_step_and_zero_eta() {
        let client = shifted_client();
        let (w, drift) = local_multistep_sgd(&client, &pv(&[1.0]), 1, 0.25).unwrap();
        assert_relative_eq!(w[0], 1.0 - 0.25 * (1.0 - 3.0));
        assert!(drift.cumulative.is_zero());

        let (w, _) = local_multistep_sgd(&client, &pv(&[1.0]), 7, 0.0).unwrap();
        assert_eq!(w[0], 1.0);
        assert!(local_multistep_sgd(&client, &pv(&[1.0]), 0, 0.1).is_err());
    }

    #[test]
    fn local_sgd_divergence_is_reported() {
        let client = shifted_client();
        let err = local_multistep_sgd(&client, &pv(&[1.0]), 2000, 3.0).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }));
    }

    #[test]
    fn aggregate_examples() {
        let (a, b) = (pv(&[2.0]), pv(&[4.0]));
        assert_relative_eq!(aggregate(&[(0.25, &a), (0.75, &b)]).unwrap()[0], 3.5);
        assert_eq!(aggregate(&[(1.0, &a)]).unwrap(), a);
        let m = pv(&[1.5, -2.0]);
        let avg = aggregate(&[(0.3, &m), (0.7, &m)]).unwrap();
        assert!((&avg - &m).norm() < 1e-15);
        assert!(matches!(
            aggregate(&[(0.3, &a), (0.3, &b)]),
            Err(Error::WeightSum { .. })
        ));
    }

    fn single_round(steps: usize, eta: f64) -> RoundTrace {
        let client = shifted_client();
        let w0 = pv(&[0.0]);
        let (w, drift) = local_multistep_sgd(&client, &w0, steps, eta).unwrap();
        let ct = ClientTrace {
            client: 0,
            weight: 1.0,
            steps,
            deviation: &w - &w0,
            final_model: w.clone(),
            gradient_at_global: client.objective.gradient(&w0).unwrap(),
            drift,
        };
        RoundTrace::new(0, eta, w0, w, vec![ct], Some(&pv(&[3.0]))).unwrap()
    }

    #[test]
    fn identity_walkthrough() {
        let trace = single_round(2, 0.1);
        assert_relative_eq!(
            trace.error_after.as_ref().unwrap()[0],
            -2.43,
            epsilon = 1e-14
        );
        assert!(error_identity_check(&trace, 0.1).unwrap() <= 1e-12);
        assert!(trace.aggregation_residual().unwrap() <= 1e-15);

        assert!(error_identity_check(&single_round(1, 0.1), 0.1).unwrap() <= 1e-12);
        assert_eq!(
            error_identity_check(&single_round(3, 0.0), 0.0).unwrap(),
            0.0
        );
    }

    #[test]
    fn identity_needs_optimum() {
        let mut trace = single_round(2, 0.1);
        trace.error_before = None;
        assert!(matches!(
            error_identity_check(&trace, 0.1),
            Err(Error::MissingOptimum)
        ));
    }
}
