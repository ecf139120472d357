//! Comparison strategies over the same round engine.
//!
//! Each baseline follows its standard full-participation, full-batch form:
//! FedProx adds a proximal pull toward the broadcast model, SCAFFOLD uses
//! option-II control variates, FedNova normalizes deviations by step count
//! and FedDyn keeps a first-order dual per client.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::federation::{check_weight_sum, descend, DEFAULT_DIVERGENCE_THRESHOLD};
use crate::gda::DriftRecord;
use crate::objectives::ObjectiveSpec;
use crate::vector::ParamVector;

pub const DEFAULT_FIXED_STEPS: usize = 5;
pub const DEFAULT_MU_PROX: f64 = 0.01;
pub const DEFAULT_ALPHA_DYN: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    Amsfl,
    Fedavg,
    Fedprox {
        #[serde(default = "default_mu_prox")]
        mu_prox: f64,
    },
    Scaffold,
    Fednova,
    Feddyn {
        #[serde(default = "default_alpha_dyn")]
        alpha_dyn: f64,
    },
}

fn default_mu_prox() -> f64 {
    DEFAULT_MU_PROX
}

fn default_alpha_dyn() -> f64 {
    DEFAULT_ALPHA_DYN
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Amsfl => "amsfl",
            Strategy::Fedavg => "fedavg",
            Strategy::Fedprox { .. } => "fedprox",
            Strategy::Scaffold => "scaffold",
            Strategy::Fednova => "fednova",
            Strategy::Feddyn { .. } => "feddyn",
        }
    }

    /// Strategies whose round is plain local descent plus weighted
    /// averaging, for which the aggregated error identity is exact.
    pub fn is_plain_averaging(&self) -> bool {
        match self {
            Strategy::Amsfl | Strategy::Fedavg => true,
            Strategy::Fedprox { mu_prox } => *mu_prox == 0.0,
            _ => false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Strategy::Fedprox { mu_prox } if !(mu_prox >= 0.0 && mu_prox.is_finite()) => Err(
                Error::invalid(format!("mu_prox must be nonnegative, got {mu_prox}")),
            ),
            Strategy::Feddyn { alpha_dyn } if !(alpha_dyn > 0.0 && alpha_dyn.is_finite()) => Err(
                Error::invalid(format!("alpha_dyn must be positive, got {alpha_dyn}")),
            ),
            _ => Ok(()),
        }
    }
}

/// A baseline together with its fixed per-round step count.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    #[serde(flatten)]
    pub strategy: Strategy,
    #[serde(default = "default_fixed_steps")]
    pub fixed_steps: usize,
}

fn default_fixed_steps() -> usize {
    DEFAULT_FIXED_STEPS
}

impl StrategySpec {
    pub fn new(strategy: Strategy) -> Self {
        Self {
            strategy,
            fixed_steps: DEFAULT_FIXED_STEPS,
        }
    }
}

/// SCAFFOLD server and client control variates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlVariates {
    pub server: ParamVector,
    pub clients: Vec<ParamVector>,
}

impl ControlVariates {
    pub fn zeros(num_clients: usize, dim: usize) -> Self {
        Self {
            server: ParamVector::zeros(dim),
            clients: vec![ParamVector::zeros(dim); num_clients],
        }
    }

    /// `server = Σ ωᵢ cᵢ`
    pub fn refresh_server(&mut self, weights: &[f64]) -> Result<()> {
        self.server = ParamVector::weighted_sum(
            self.server.dim(),
            weights.iter().copied().zip(self.clients.iter()),
        )?;
        Ok(())
    }
}

fn fedprox_traced(
    obj: &ObjectiveSpec,
    w_global: &ParamVector,
    steps: usize,
    eta: f64,
    mu_prox: f64,
) -> Result<(ParamVector, DriftRecord)> {
    if !(mu_prox >= 0.0) {
        return Err(Error::invalid(format!(
            "mu_prox must be nonnegative, got {mu_prox}"
        )));
    }
    descend(
        obj,
        w_global,
        steps,
        eta,
        DEFAULT_DIVERGENCE_THRESHOLD,
        |w, g| {
            if mu_prox != 0.0 {
                g.axpy(mu_prox, &(w - w_global));
            }
        },
    )
}

/// `t` steps on `Fᵢ(w) + (μ/2)‖w − w_global‖²`.
pub fn local_update_fedprox(
    obj: &ObjectiveSpec,
    w_global: &ParamVector,
    steps: usize,
    eta: f64,
    mu_prox: f64,
) -> Result<ParamVector> {
    fedprox_traced(obj, w_global, steps, eta, mu_prox).map(|(w, _)| w)
}

fn scaffold_traced(
    obj: &ObjectiveSpec,
    w_global: &ParamVector,
    steps: usize,
    eta: f64,
    variates: &ControlVariates,
    client: usize,
) -> Result<(ParamVector, ParamVector, DriftRecord)> {
    let horizon = steps as f64 * eta;
    if horizon == 0.0 {
        return Err(Error::invalid("SCAFFOLD needs steps * eta > 0"));
    }
    let own = variates
        .clients
        .get(client)
        .ok_or_else(|| Error::invalid(format!("no control variate for client {client}")))?;
    let shift = &variates.server - own;
    let (w, drift) = descend(
        obj,
        w_global,
        steps,
        eta,
        DEFAULT_DIVERGENCE_THRESHOLD,
        |_, g| {
            *g += &shift;
        },
    )?;
    // option II: cᵢ ← cᵢ − c + (w_global − w_local)/(tη)
    let mut updated = own - &variates.server;
    updated.axpy(1.0 / horizon, &(w_global - &w));
    Ok((w, updated, drift))
}

/// Local steps along `∇Fᵢ(w) − cᵢ + c`; returns the local model and the
/// client's updated variate.
pub fn local_update_scaffold(
    obj: &ObjectiveSpec,
    w_global: &ParamVector,
    steps: usize,
    eta: f64,
    variates: &ControlVariates,
    client: usize,
) -> Result<(ParamVector, ParamVector)> {
    scaffold_traced(obj, w_global, steps, eta, variates, client).map(|(w, c, _)| (w, c))
}

/// Normalized averaging: `(Σ ωᵢ tᵢ) · Σ ωᵢ δᵢ / tᵢ`.
pub fn aggregate_fednova(
    deviations: &[ParamVector],
    weights: &[f64],
    steps: &[usize],
) -> Result<ParamVector> {
    if deviations.len() != weights.len() || deviations.len() != steps.len() {
        return Err(Error::invalid(
            "fednova inputs must have one entry per client",
        ));
    }
    let first = deviations
        .first()
        .ok_or_else(|| Error::invalid("nothing to aggregate"))?;
    if steps.contains(&0) {
        return Err(Error::invalid("every client needs at least one step"));
    }
    let tau_eff: f64 = weights.iter().zip(steps).map(|(w, &t)| w * t as f64).sum();
    let normalized = ParamVector::weighted_sum(
        first.dim(),
        deviations
            .iter()
            .zip(weights.iter().zip(steps))
            .map(|(d, (&w, &t))| (w / t as f64, d)),
    )?;
    Ok(normalized.scaled(tau_eff))
}

fn feddyn_traced(
    obj: &ObjectiveSpec,
    w_global: &ParamVector,
    steps: usize,
    eta: f64,
    alpha_dyn: f64,
    dual: &ParamVector,
) -> Result<(ParamVector, ParamVector, DriftRecord)> {
    if !(alpha_dyn > 0.0) {
        return Err(Error::invalid(format!(
            "alpha_dyn must be positive, got {alpha_dyn}"
        )));
    }
    dual.ensure_dim(w_global.dim())?;
    let (w, drift) = descend(
        obj,
        w_global,
        steps,
        eta,
        DEFAULT_DIVERGENCE_THRESHOLD,
        |w, g| {
            *g -= dual;
            g.axpy(alpha_dyn, &(w - w_global));
        },
    )?;
    let mut updated = dual.clone();
    updated.axpy(-alpha_dyn, &(&w - w_global));
    Ok((w, updated, drift))
}

/// `t` steps on `Fᵢ(w) − ⟨λᵢ, w⟩ + (α/2)‖w − w_global‖²`, then
/// `λᵢ ← λᵢ − α(w_local − w_global)`.
pub fn local_update_feddyn(
    obj: &ObjectiveSpec,
    w_global: &ParamVector,
    steps: usize,
    eta: f64,
    alpha_dyn: f64,
    dual: &ParamVector,
) -> Result<(ParamVector, ParamVector)> {
    feddyn_traced(obj, w_global, steps, eta, alpha_dyn, dual).map(|(w, d, _)| (w, d))
}

/// Per-run strategy state owned by the sequential round loop.
#[derive(Clone, Debug)]
pub struct StrategyRunner {
    strategy: Strategy,
    variates: Option<ControlVariates>,
    pending_variates: Vec<Option<ParamVector>>,
    duals: Vec<ParamVector>,
}

impl StrategyRunner {
    pub fn new(strategy: Strategy, num_clients: usize, dim: usize) -> Result<Self> {
        strategy.validate()?;
        Ok(Self {
            strategy,
            variates: matches!(strategy, Strategy::Scaffold)
                .then(|| ControlVariates::zeros(num_clients, dim)),
            pending_variates: vec![None; num_clients],
            duals: if matches!(strategy, Strategy::Feddyn { .. }) {
                vec![ParamVector::zeros(dim); num_clients]
            } else {
                Vec::new()
            },
        })
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn variates(&self) -> Option<&ControlVariates> {
        self.variates.as_ref()
    }

    pub fn duals(&self) -> &[ParamVector] {
        &self.duals
    }

    pub fn local_update(
        &mut self,
        client: usize,
        obj: &ObjectiveSpec,
        w_global: &ParamVector,
        steps: usize,
        eta: f64,
        divergence_threshold: f64,
    ) -> Result<(ParamVector, DriftRecord)> {
        match self.strategy {
            Strategy::Amsfl | Strategy::Fedavg | Strategy::Fednova => {
                descend(obj, w_global, steps, eta, divergence_threshold, |_, _| {})
            }
            Strategy::Fedprox { mu_prox } => fedprox_traced(obj, w_global, steps, eta, mu_prox),
            Strategy::Scaffold => {
                let variates = self.variates.as_ref().expect("scaffold state");
                let (w, c, drift) = scaffold_traced(obj, w_global, steps, eta, variates, client)?;
                self.pending_variates[client] = Some(c);
                Ok((w, drift))
            }
            Strategy::Feddyn { alpha_dyn } => {
                let (w, dual, drift) =
                    feddyn_traced(obj, w_global, steps, eta, alpha_dyn, &self.duals[client])?;
                self.duals[client] = dual;
                Ok((w, drift))
            }
        }
    }

    /// Server step: combines local models into the next global model and
    /// commits any per-client state produced during the round.
    pub fn aggregate(
        &mut self,
        w_global: &ParamVector,
        locals: &[ParamVector],
        weights: &[f64],
        steps: &[usize],
    ) -> Result<ParamVector> {
        check_weight_sum(weights.iter().copied())?;
        let dim = w_global.dim();
        let average = || ParamVector::weighted_sum(dim, weights.iter().copied().zip(locals));
        match self.strategy {
            Strategy::Amsfl | Strategy::Fedavg | Strategy::Fedprox { .. } => average(),
            Strategy::Scaffold => {
                let variates = self.variates.as_mut().expect("scaffold state");
                for (slot, pending) in variates
                    .clients
                    .iter_mut()
                    .zip(self.pending_variates.iter_mut())
                {
                    if let Some(c) = pending.take() {
                        *slot = c;
                    }
                }
                variates.refresh_server(weights)?;
                average()
            }
            Strategy::Fednova => {
                let deviations: Vec<ParamVector> = locals.iter().map(|w| w - w_global).collect();
                let update = aggregate_fednova(&deviations, weights, steps)?;
                Ok(w_global + &update)
            }
            Strategy::Feddyn { alpha_dyn } => {
                // Server state h equals Σ ωᵢ λᵢ under full participation.
                let h = ParamVector::weighted_sum(dim, weights.iter().copied().zip(&self.duals))?;
                let mut w = average()?;
                w.axpy(-1.0 / alpha_dyn, &h);
                Ok(w)
            }
        }
    }
}
