//! Gradient difference approximation (GDA) and local drift bookkeeping.
//!
//! GDA replaces the Hessian-vector product `∇²F(w)·δ` with the first-order
//! difference `∇F(w + δ) − ∇F(w)`. The remainder is bounded by `(L/2)‖δ‖²`
//! whenever `L` bounds the Hessian's Lipschitz constant on the segment.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::ObjectiveSpec;
use crate::vector::ParamVector;

const SATISFIED_ABS_TOL: f64 = 1e-12;
const SATISFIED_REL_TOL: f64 = 1e-9;

/// `∇F(w + δ) − ∇F(w)`.
pub fn gradient_difference(
    obj: &ObjectiveSpec,
    w: &ParamVector,
    delta: &ParamVector,
) -> Result<ParamVector> {
    delta.ensure_dim(obj.dim())?;
    let shifted = w + delta;
    if let Some(region) = obj.region() {
        if !region.contains(w) || !region.contains(&shifted) {
            warn!("gradient difference evaluated outside the declared region");
        }
    }
    Ok(&obj.gradient(&shifted)? - &obj.gradient(w)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GdaReport {
    pub remainder_norm: f64,
    pub bound: f64,
    pub satisfied: bool,
}

/// Compares the GDA remainder `‖(∇F(w+δ) − ∇F(w)) − ∇²F(w)δ‖` with
/// `(L/2)‖δ‖²`.
pub fn gda_remainder(
    obj: &ObjectiveSpec,
    w: &ParamVector,
    delta: &ParamVector,
    lipschitz: f64,
) -> Result<GdaReport> {
    if !lipschitz.is_finite() || lipschitz < 0.0 || (lipschitz == 0.0 && !obj.is_quadratic()) {
        return Err(Error::invalid(format!(
            "GDA bound needs a positive Lipschitz constant, got {lipschitz}"
        )));
    }
    let diff = gradient_difference(obj, w, delta)?;
    let hv = obj.hessian_vector(w, delta)?;
    let remainder_norm = (&diff - &hv).norm();
    let bound = 0.5 * lipschitz * delta.norm_squared();
    let satisfied = remainder_norm <= bound + SATISFIED_ABS_TOL + SATISFIED_REL_TOL * bound;
    Ok(GdaReport {
        remainder_norm,
        bound,
        satisfied,
    })
}

/// How the per-step drifts of a local trajectory are summed into `Δᵢ`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftConvention {
    /// `Σ_{t<tᵢ} Δg⁽ᵗ⁾`; the form under which the aggregated error identity
    /// holds exactly.
    #[default]
    SingleSum,
    /// `Σ_{t<tᵢ} Σ_{1≤j≤t} Δg⁽ʲ⁾`
    DoubleSum,
}

/// Per-step gradient deviations of one client's local trajectory.
///
/// `per_step[t] = ∇Fᵢ(w_{i,t}) − ∇Fᵢ(w⁽ᵏ⁾)` for `t = 0..tᵢ`, so the first
/// entry is always zero. `cumulative` is their single sum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftRecord {
    pub per_step: Vec<ParamVector>,
    pub cumulative: ParamVector,
}

impl DriftRecord {
    pub fn from_steps(per_step: Vec<ParamVector>) -> Result<Self> {
        let cumulative = accumulate_drift(&per_step, DriftConvention::SingleSum)?;
        Ok(Self {
            per_step,
            cumulative,
        })
    }

    pub fn steps(&self) -> usize {
        self.per_step.len()
    }

    pub fn accumulated(&self, convention: DriftConvention) -> Result<ParamVector> {
        match convention {
            DriftConvention::SingleSum => Ok(self.cumulative.clone()),
            DriftConvention::DoubleSum => accumulate_drift(&self.per_step, convention),
        }
    }
}

pub fn accumulate_drift(
    per_step: &[ParamVector],
    convention: DriftConvention,
) -> Result<ParamVector> {
    let first = per_step
        .first()
        .ok_or_else(|| Error::invalid("drift accumulation needs at least one step"))?;
    let dim = first.dim();
    let mut total = ParamVector::zeros(dim);
    match convention {
        DriftConvention::SingleSum => {
            for g in per_step {
                g.ensure_dim(dim)?;
                total += g;
            }
        }
        DriftConvention::DoubleSum => {
            // Outer index t contributes the prefix sum over j = 1..=t.
            let mut prefix = ParamVector::zeros(dim);
            for g in per_step.iter().skip(1) {
                g.ensure_dim(dim)?;
                prefix += g;
                total += &prefix;
            }
        }
    }
    Ok(total)
}

/// Unscaled local drift bound `(L·G/2)·t·(t − 1)`.
pub fn drift_bound(steps: usize, lipschitz: f64, grad_bound: f64) -> f64 {
    let t = steps as f64;
    0.5 * lipschitz * grad_bound * t * (t - 1.0).max(0.0)
}

/// Drift bound along an actual gradient-descent trajectory with step size
/// `eta`: each `‖Δg⁽ᵗ⁾‖ ≤ L‖w_{i,t} − w⁽ᵏ⁾‖ ≤ L·η·t·G`.
pub fn drift_bound_scaled(steps: usize, eta: f64, lipschitz: f64, grad_bound: f64) -> f64 {
    eta * drift_bound(steps, lipschitz, grad_bound)
}
