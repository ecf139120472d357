//! One-round error recursion bounds.
//!
//! Two forms are evaluated side by side. The drift-free form
//! `‖e⁽ᵏ⁺¹⁾‖² ≤ ‖e⁽ᵏ⁾‖² − 2ηE⟨∇F(w⁽ᵏ⁾), e⁽ᵏ⁾⟩ + Δₖ` with
//! `Δₖ = η²G²E² + η²L²G²D²` drops the drift cross term and can fail. The
//! linearized form `‖e⁽ᵏ⁺¹⁾‖² ≤ (1 − θ′)‖e⁽ᵏ⁾‖² + Δₖ` with `θ = 2ημE`,
//! `θ′ = θ − ρ` and `Δₖ = 2η²Gₖ² + (2 + 1/ρ)η²Dₖ²` accounts for it through
//! Young's inequality.

use serde::{Deserialize, Serialize};

use super::RoundTrace;
use crate::error::{Error, Result};
use crate::objectives::SmoothnessConstants;

const ABS_TOL: f64 = 1e-12;
const REL_TOL: f64 = 1e-9;

fn holds(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs + ABS_TOL + REL_TOL * rhs.abs()
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DriftFreeCheck {
    pub delta_k: f64,
    pub rhs: f64,
    pub satisfied: bool,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LinearizedCheck {
    pub rho: f64,
    pub theta: f64,
    pub theta_prime: f64,
    pub delta_k: f64,
    pub rhs: f64,
    /// `θ′ ≤ 0`: the bound does not contract and says nothing useful.
    pub vacuous: bool,
    pub satisfied: bool,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RecursionReport {
    pub error_sq: f64,
    pub lhs: f64,
    pub drift_free: DriftFreeCheck,
    pub linearized: LinearizedCheck,
}

pub fn recursion_bound_report(
    trace: &RoundTrace,
    consts: &SmoothnessConstants,
    rho: f64,
) -> Result<RecursionReport> {
    let (Some(before), Some(after)) = (&trace.error_before, &trace.error_after) else {
        return Err(Error::MissingOptimum);
    };
    if !(consts.mu > 0.0) {
        return Err(Error::invalid(
            "recursion bounds need strong convexity (mu > 0)",
        ));
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::invalid(format!("rho must lie in (0, 1), got {rho}")));
    }
    let eta = trace.eta;
    let agg = trace.aggregates;
    let error_sq = before.norm_squared();
    let lhs = after.norm_squared();

    let l = consts.lipschitz;
    let g = consts.grad_bound;
    let main_delta =
        eta * eta * g * g * agg.e * agg.e + eta * eta * l * l * g * g * agg.schedule_d2;
    let descent = 2.0 * eta * agg.e * trace.global_gradient()?.dot(before);
    let main_rhs = error_sq - descent + main_delta;

    let theta = 2.0 * eta * consts.mu * agg.e;
    let theta_prime = theta - rho;
    let app_delta = 2.0 * eta * eta * agg.g_k * agg.g_k
        + (2.0 + 1.0 / rho) * eta * eta * agg.realized_d * agg.realized_d;
    let app_rhs = (1.0 - theta_prime) * error_sq + app_delta;

    Ok(RecursionReport {
        error_sq,
        lhs,
        drift_free: DriftFreeCheck {
            delta_k: main_delta,
            rhs: main_rhs,
            satisfied: holds(lhs, main_rhs),
        },
        linearized: LinearizedCheck {
            rho,
            theta,
            theta_prime,
            delta_k: app_delta,
            rhs: app_rhs,
            vacuous: theta_prime <= 0.0,
            satisfied: holds(lhs, app_rhs),
        },
    })
}

/// Limiting residual `(1 + 1/θ)·Δₖ` of the linearized recursion.
pub fn residual_limit(delta_k: f64, theta: f64) -> Result<f64> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::invalid(format!(
            "theta must lie in (0, 1), got {theta}"
        )));
    }
    if !(delta_k >= 0.0) {
        return Err(Error::invalid(format!(
            "delta_k must be nonnegative, got {delta_k}"
        )));
    }
    Ok((1.0 + 1.0 / theta) * delta_k)
}

/// Fixed point `Δₖ/θ′` of `x ↦ (1 − θ′)x + Δₖ`.
pub fn linearized_residual_bound(delta_k: f64, theta_prime: f64) -> Result<f64> {
    if !(theta_prime > 0.0) {
        return Err(Error::invalid(
            "bound vacuous for this configuration (theta' <= 0)",
        ));
    }
    Ok(delta_k / theta_prime)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::federation::{local_multistep_sgd, ClientState, ClientTrace};
    use crate::objectives::ObjectiveSpec;
    use crate::vector::ParamVector;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn walkthrough(steps: usize, eta: f64) -> RoundTrace {
        let obj = ObjectiveSpec::quadratic_centered(
            DMatrix::identity(1, 1),
            &ParamVector::from_slice(&[3.0]),
        )
        .unwrap();
        let client = ClientState::new(0, 1.0, 1.0, 0.0, obj).unwrap();
        let w0 = ParamVector::from_slice(&[0.0]);
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
        RoundTrace::new(
            0,
            eta,
            w0,
            w,
            vec![ct],
            Some(&ParamVector::from_slice(&[3.0])),
        )
        .unwrap()
    }

    fn consts() -> SmoothnessConstants {
        SmoothnessConstants::new(1.0, 1.0, 3.0)
    }

    #[test]
    fn worked_example_violates_drift_free_form() {
        let r = recursion_bound_report(&walkthrough(2, 0.1), &consts(), 0.1).unwrap();
        assert_relative_eq!(r.lhs, 5.9049, epsilon = 1e-12);
        assert_relative_eq!(r.drift_free.rhs, 5.85, epsilon = 1e-12);
        assert_relative_eq!(r.drift_free.delta_k, 0.45, epsilon = 1e-12);
        assert!(!r.drift_free.satisfied);
        assert!(!r.linearized.vacuous);
        assert!(r.linearized.satisfied);
        // θ = 0.4, Gₖ = 6, Dₖ = 0.3
        assert_relative_eq!(r.linearized.theta, 0.4, epsilon = 1e-15);
        assert_relative_eq!(
            r.linearized.delta_k,
            0.72 + 12.0 * 0.01 * 0.09,
            epsilon = 1e-12
        );
    }

    #[test]
    fn zero_drift_satisfies_drift_free_form() {
        let r = recursion_bound_report(&walkthrough(1, 0.1), &consts(), 0.1).unwrap();
        assert!(r.drift_free.satisfied);
    }

    #[test]
    fn tiny_eta_is_tight() {
        let r = recursion_bound_report(&walkthrough(3, 1e-9), &consts(), 0.5).unwrap();
        assert_relative_eq!(r.lhs, r.error_sq, max_relative = 1e-7);
        assert!(r.drift_free.satisfied);
        assert!(r.linearized.vacuous);
    }

    #[test]
    fn requires_strong_convexity_and_valid_rho() {
        let t = walkthrough(2, 0.1);
        assert!(recursion_bound_report(&t, &SmoothnessConstants::new(1.0, 0.0, 3.0), 0.1).is_err());
        assert!(recursion_bound_report(&t, &consts(), 1.0).is_err());
    }

    #[test]
    fn residual_limit_examples() {
        assert_relative_eq!(residual_limit(0.45, 0.5).unwrap(), 1.35, epsilon = 1e-15);
        assert_eq!(residual_limit(0.0, 0.3).unwrap(), 0.0);
        assert_relative_eq!(
            residual_limit(0.7, 1.0 - 1e-12).unwrap(),
            1.4,
            epsilon = 1e-9
        );
        assert!(residual_limit(1.0, 0.0).is_err());
        assert!(residual_limit(1.0, 1.5).is_err());
    }
}
