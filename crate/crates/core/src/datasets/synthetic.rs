use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::federation::{ClientState, Federation};
use crate::objectives::{ObjectiveSpec, Region, SmoothnessConstants};
use crate::vector::ParamVector;

const MAX_REGENERATIONS: u64 = 16;
const NEWTON_MAX_ITERS: usize = 100;
const NEWTON_TOL: f64 = 1e-10;

/// Federated task with a known weighted optimum.
#[derive(Clone, Debug)]
pub struct SyntheticFederation {
    pub objectives: Vec<ObjectiveSpec>,
    pub weights: Vec<f64>,
    pub w_star: ParamVector,
    pub heterogeneity: f64,
    /// Per-client minimizers (quadratic tasks only).
    pub minimizers: Vec<ParamVector>,
}

impl SyntheticFederation {
    pub fn num_clients(&self) -> usize {
        self.objectives.len()
    }

    pub fn dim(&self) -> usize {
        self.w_star.dim()
    }

    /// `‖Σ ωᵢ ∇Fᵢ(w*)‖`
    pub fn optimality_residual(&self) -> Result<f64> {
        Ok(weighted_gradient(&self.objectives, &self.weights, &self.w_star)?.norm())
    }

    /// Ball centered at `w*` that contains the origin, every client
    /// minimizer and some margin, used for the smoothness constants.
    pub fn default_region(&self) -> Result<Region> {
        let mut r = self.w_star.norm();
        for m in &self.minimizers {
            r = r.max((m - &self.w_star).norm());
        }
        Region::new(self.w_star.clone(), 2.0 * r.max(1.0))
    }

    /// Worst-case constants over all clients on `region`.
    pub fn constants(&self, region: &Region) -> Result<SmoothnessConstants> {
        let per_client = self
            .objectives
            .iter()
            .map(|o| o.constants_on(region))
            .collect::<Result<Vec<_>>>()?;
        SmoothnessConstants::worst_case(per_client).ok_or_else(|| Error::invalid("no clients"))
    }

    /// Attaches a cost model and builds a runnable federation.
    pub fn to_federation(&self, step_costs: &[f64], comm_delays: &[f64]) -> Result<Federation> {
        let n = self.num_clients();
        if step_costs.len() != n || comm_delays.len() != n {
            return Err(Error::invalid(format!(
                "cost model has {} step costs and {} delays for {n} clients",
                step_costs.len(),
                comm_delays.len()
            )));
        }
        let clients = self
            .objectives
            .iter()
            .enumerate()
            .map(|(i, o)| {
                ClientState::new(i, self.weights[i], step_costs[i], comm_delays[i], o.clone())
            })
            .collect::<Result<Vec<_>>>()?;
        let constants = self.constants(&self.default_region()?)?;
        Federation::new(clients, Some(self.w_star.clone()), constants)
    }
}

fn weighted_gradient(
    objectives: &[ObjectiveSpec],
    weights: &[f64],
    w: &ParamVector,
) -> Result<ParamVector> {
    let mut g = ParamVector::zeros(w.dim());
    for (o, &p) in objectives.iter().zip(weights) {
        g.axpy(p, &o.gradient(w)?);
    }
    Ok(g)
}

fn resolve_weights(n: usize, weights: &Option<Vec<f64>>) -> Result<Vec<f64>> {
    match weights {
        None => Ok(vec![1.0 / n as f64; n]),
        Some(w) => {
            if w.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: w.len(),
                });
            }
            if w.iter().any(|&p| !(p > 0.0)) {
                return Err(Error::invalid("aggregation weights must be positive"));
            }
            let sum: f64 = w.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::WeightSum { sum });
            }
            Ok(w.clone())
        }
    }
}

fn gaussian_vector(rng: &mut ChaCha8Rng, dim: usize) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Haar-distributed orthogonal matrix from the QR factors of a Gaussian matrix.
fn random_orthogonal(rng: &mut ChaCha8Rng, dim: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Point drawn uniformly from the ball of radius `radius`.
fn uniform_in_ball(rng: &mut ChaCha8Rng, dim: usize, radius: f64) -> DVector<f64> {
    if radius == 0.0 {
        return DVector::zeros(dim);
    }
    let dir = gaussian_vector(rng, dim);
    let norm = dir.norm();
    if norm == 0.0 {
        return DVector::zeros(dim);
    }
    let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
    dir * (r / norm)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticTask {
    pub num_clients: usize,
    pub dim: usize,
    /// Client minimizers lie within this distance of a common center.
    pub heterogeneity: f64,
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default = "default_lipschitz")]
    pub lipschitz: f64,
    /// Standard deviation of the common center's coordinates.
    #[serde(default = "default_center_scale")]
    pub center_scale: f64,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
}

fn default_mu() -> f64 {
    0.5
}
fn default_lipschitz() -> f64 {
    2.0
}
fn default_center_scale() -> f64 {
    1.0
}

impl QuadraticTask {
    pub fn new(num_clients: usize, dim: usize, heterogeneity: f64) -> Self {
        Self {
            num_clients,
            dim,
            heterogeneity,
            mu: default_mu(),
            lipschitz: default_lipschitz(),
            center_scale: default_center_scale(),
            weights: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.num_clients == 0 || self.dim == 0 {
            return Err(Error::invalid("quadratic task needs N >= 1 and d >= 1"));
        }
        if !(self.heterogeneity >= 0.0 && self.heterogeneity.is_finite()) {
            return Err(Error::invalid("heterogeneity must be a nonnegative real"));
        }
        if !(self.mu >= 0.0
            && self.lipschitz >= self.mu
            && self.lipschitz > 0.0
            && self.lipschitz.is_finite())
        {
            return Err(Error::invalid(format!(
                "need 0 <= mu <= L with L > 0, got mu={} L={}",
                self.mu, self.lipschitz
            )));
        }
        if !(self.center_scale >= 0.0 && self.center_scale.is_finite()) {
            return Err(Error::invalid("center_scale must be nonnegative"));
        }
        Ok(())
    }
}

/// Quadratic clients `Fᵢ(w) = ½(w − mᵢ)ᵀAᵢ(w − mᵢ)` with Hessian spectra in
/// `[μ, L]` and the exact optimum `(Σ ωᵢAᵢ)⁻¹ Σ ωᵢAᵢmᵢ`.
///
/// Draw order: center, then per client the rotation, the spectrum and the
/// minimizer offset.
pub fn generate_quadratic_federation(
    task: &QuadraticTask,
    seed: u64,
) -> Result<SyntheticFederation> {
    task.validate()?;
    let weights = resolve_weights(task.num_clients, &task.weights)?;
    for attempt in 0..MAX_REGENERATIONS {
        let s = seed.wrapping_add(attempt);
        if let Some(fed) = try_quadratic(task, &weights, s)? {
            return Ok(fed);
        }
        warn!("singular aggregate Hessian for seed {s}; regenerating");
    }
    Err(Error::invalid(format!(
        "aggregate Hessian singular after {MAX_REGENERATIONS} regenerations"
    )))
}

fn try_quadratic(
    task: &QuadraticTask,
    weights: &[f64],
    seed: u64,
) -> Result<Option<SyntheticFederation>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = task.dim;
    let center = gaussian_vector(&mut rng, d) * task.center_scale;
    let mut mats = Vec::with_capacity(task.num_clients);
    let mut minimizers = Vec::with_capacity(task.num_clients);
    for _ in 0..task.num_clients {
        let q = random_orthogonal(&mut rng, d);
        let eig = DVector::from_fn(d, |_, _| rng.random_range(task.mu..=task.lipschitz));
        let a = &q * DMatrix::from_diagonal(&eig) * q.transpose();
        // symmetrize away rounding
        let a = (&a + a.transpose()) * 0.5;
        let m = &center + uniform_in_ball(&mut rng, d, task.heterogeneity);
        mats.push(a);
        minimizers.push(ParamVector::from_dvector(m));
    }
    let weights = weights.to_vec();
    assemble_quadratics(mats, minimizers, weights, task.heterogeneity)
}

fn assemble_quadratics(
    mats: Vec<DMatrix<f64>>,
    minimizers: Vec<ParamVector>,
    weights: Vec<f64>,
    heterogeneity: f64,
) -> Result<Option<SyntheticFederation>> {
    let d = minimizers[0].dim();
    let mut h = DMatrix::zeros(d, d);
    let mut rhs = DVector::zeros(d);
    for ((a, m), &p) in mats.iter().zip(&minimizers).zip(&weights) {
        h += a * p;
        rhs += a * m.as_dvector() * p;
    }
    let Some(chol) = h.cholesky() else {
        return Ok(None);
    };
    let w_star = ParamVector::from_dvector(chol.solve(&rhs));
    let objectives = mats
        .into_iter()
        .zip(&minimizers)
        .map(|(a, m)| ObjectiveSpec::quadratic_centered(a, m))
        .collect::<Result<Vec<_>>>()?;
    Ok(Some(SyntheticFederation {
        objectives,
        weights,
        w_star,
        heterogeneity,
        minimizers,
    }))
}

impl SyntheticFederation {
    /// Quadratic federation from explicit Hessians and minimizers.
    pub fn from_quadratics(
        mats: Vec<DMatrix<f64>>,
        minimizers: Vec<ParamVector>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let n = mats.len();
        if n == 0 || minimizers.len() != n {
            return Err(Error::invalid(
                "need one minimizer per Hessian and at least one client",
            ));
        }
        let weights = resolve_weights(n, &Some(weights))?;
        let d = minimizers[0].dim();
        for m in &minimizers {
            m.ensure_dim(d)?;
        }
        let spread = minimizers
            .iter()
            .flat_map(|a| minimizers.iter().map(move |b| (a - b).norm()))
            .fold(0.0, f64::max);
        assemble_quadratics(mats, minimizers, weights, spread / 2.0)?
            .ok_or_else(|| Error::invalid("aggregate Hessian is singular"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogisticTask {
    pub num_clients: usize,
    /// Feature dimension excluding the bias column.
    pub dim: usize,
    pub samples_per_client: usize,
    /// Scale of the per-client shift of the feature mean.
    pub heterogeneity: f64,
    #[serde(default = "default_ridge")]
    pub ridge: f64,
    /// Probability of flipping a label.
    #[serde(default = "default_label_noise")]
    pub label_noise: f64,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
}

fn default_ridge() -> f64 {
    0.01
}
fn default_label_noise() -> f64 {
    0.1
}

impl LogisticTask {
    pub fn new(
        num_clients: usize,
        dim: usize,
        samples_per_client: usize,
        heterogeneity: f64,
    ) -> Self {
        Self {
            num_clients,
            dim,
            samples_per_client,
            heterogeneity,
            ridge: default_ridge(),
            label_noise: default_label_noise(),
            weights: None,
        }
    }
}

/// Logistic clients whose features are Gaussian around client-specific means,
/// labelled by a shared ground-truth separator with random flips. A bias
/// column of ones is appended, so the model dimension is `dim + 1`. The
/// optimum is found by damped Newton iterations.
///
/// Draw order: ground-truth separator, then per client the mean shift and
/// the samples row by row (features, then flip).
pub fn generate_logistic_federation(task: &LogisticTask, seed: u64) -> Result<SyntheticFederation> {
    if task.num_clients == 0 || task.dim == 0 || task.samples_per_client == 0 {
        return Err(Error::invalid(
            "logistic task needs N, d and samples per client >= 1",
        ));
    }
    if !(task.ridge > 0.0 && task.ridge.is_finite()) {
        return Err(Error::invalid(
            "logistic task needs ridge > 0 for a unique optimum",
        ));
    }
    if !(0.0..0.5).contains(&task.label_noise) {
        return Err(Error::invalid("label_noise must lie in [0, 0.5)"));
    }
    if !(task.heterogeneity >= 0.0 && task.heterogeneity.is_finite()) {
        return Err(Error::invalid("heterogeneity must be a nonnegative real"));
    }
    let weights = resolve_weights(task.num_clients, &task.weights)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = task.dim;
    let truth = gaussian_vector(&mut rng, d);
    let mut objectives = Vec::with_capacity(task.num_clients);
    for _ in 0..task.num_clients {
        let shift = gaussian_vector(&mut rng, d) * task.heterogeneity;
        let n = task.samples_per_client;
        let mut x = DMatrix::zeros(n, d + 1);
        let mut y = Vec::with_capacity(n);
        for r in 0..n {
            let row = &shift + gaussian_vector(&mut rng, d);
            let mut label = if row.dot(&truth) >= 0.0 { 1.0 } else { -1.0 };
            if rng.random::<f64>() < task.label_noise {
                label = -label;
            }
            for j in 0..d {
                x[(r, j)] = row[j];
            }
            x[(r, d)] = 1.0;
            y.push(label);
        }
        objectives.push(ObjectiveSpec::logistic(x, y, task.ridge)?);
    }
    let w_star = newton_optimum(&objectives, &weights)?;
    Ok(SyntheticFederation {
        objectives,
        weights,
        w_star,
        heterogeneity: task.heterogeneity,
        minimizers: Vec::new(),
    })
}

fn weighted_hessian(
    objectives: &[ObjectiveSpec],
    weights: &[f64],
    w: &ParamVector,
) -> Result<DMatrix<f64>> {
    let d = w.dim();
    let mut h = DMatrix::zeros(d, d);
    for j in 0..d {
        let mut e = ParamVector::zeros(d);
        e[j] = 1.0;
        let col = weighted_sum_hvp(objectives, weights, w, &e)?;
        h.set_column(j, col.as_dvector());
    }
    Ok((&h + h.transpose()) * 0.5)
}

fn weighted_sum_hvp(
    objectives: &[ObjectiveSpec],
    weights: &[f64],
    w: &ParamVector,
    v: &ParamVector,
) -> Result<ParamVector> {
    let mut out = ParamVector::zeros(w.dim());
    for (o, &p) in objectives.iter().zip(weights) {
        out.axpy(p, &o.hessian_vector(w, v)?);
    }
    Ok(out)
}

fn weighted_value(objectives: &[ObjectiveSpec], weights: &[f64], w: &ParamVector) -> Result<f64> {
    objectives
        .iter()
        .zip(weights)
        .map(|(o, &p)| Ok(p * o.value(w)?))
        .sum()
}

/// Damped Newton minimization of `Σ ωᵢ Fᵢ` from the origin.
pub(crate) fn newton_optimum(objectives: &[ObjectiveSpec], weights: &[f64]) -> Result<ParamVector> {
    let d = objectives[0].dim();
    let mut w = ParamVector::zeros(d);
    for _ in 0..NEWTON_MAX_ITERS {
        let g = weighted_gradient(objectives, weights, &w)?;
        if g.norm() <= NEWTON_TOL {
            return Ok(w);
        }
        let h = weighted_hessian(objectives, weights, &w)?;
        let step = h
            .cholesky()
            .ok_or_else(|| Error::invalid("aggregate Hessian not positive definite"))?
            .solve(g.as_dvector());
        let step = ParamVector::from_dvector(step);
        let f0 = weighted_value(objectives, weights, &w)?;
        let slope = g.dot(&step);
        let mut t = 1.0;
        loop {
            let cand = &w - &step.scaled(t);
            if weighted_value(objectives, weights, &cand)? <= f0 - 1e-4 * t * slope || t < 1e-10 {
                w = cand;
                break;
            }
            t *= 0.5;
        }
    }
    let g = weighted_gradient(objectives, weights, &w)?.norm();
    if g <= 1e-8 {
        Ok(w)
    } else {
        Err(Error::invalid(format!(
            "Newton iterations stalled at gradient norm {g:e}"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_heterogeneity_collapses_minimizers() {
        let fed = generate_quadratic_federation(&QuadraticTask::new(4, 3, 0.0), 7).unwrap();
        for m in &fed.minimizers {
            assert!((m - &fed.minimizers[0]).norm() < 1e-15);
        }
        assert!((&fed.w_star - &fed.minimizers[0]).norm() < 1e-12);
    }

    #[test]
    fn single_client_optimum_is_its_minimizer() {
        let fed = generate_quadratic_federation(&QuadraticTask::new(1, 5, 2.0), 3).unwrap();
        assert!((&fed.w_star - &fed.minimizers[0]).norm() < 1e-12);
    }

    #[test]
    fn spectra_lie_in_configured_interval() {
        let mut task = QuadraticTask::new(3, 6, 1.0);
        task.mu = 0.3;
        task.lipschitz = 4.0;
        let fed = generate_quadratic_federation(&task, 11).unwrap();
        for o in &fed.objectives {
            let c = o.smoothness_constants(1.0, &ParamVector::zeros(6)).unwrap();
            assert!(c.mu >= 0.3 - 1e-12 && c.lipschitz <= 4.0 + 1e-12);
        }
        assert!(fed.optimality_residual().unwrap() <= 1e-8);
    }

    #[test]
    fn minimizers_within_heterogeneity() {
        let fed = generate_quadratic_federation(&QuadraticTask::new(20, 4, 0.7), 5).unwrap();
        let mean = ParamVector::weighted_sum(4, fed.minimizers.iter().map(|m| (0.05, m))).unwrap();
        for a in &fed.minimizers {
            for b in &fed.minimizers {
                assert!((a - b).norm() <= 1.4 + 1e-12);
            }
        }
        assert!(mean.is_finite());
    }

    #[test]
    fn two_client_normal_equations() {
        let one = DMatrix::identity(1, 1);
        let fed = SyntheticFederation::from_quadratics(
            vec![one.clone(), one],
            vec![
                ParamVector::from_slice(&[0.0]),
                ParamVector::from_slice(&[2.0]),
            ],
            vec![0.5, 0.5],
        )
        .unwrap();
        assert_relative_eq!(fed.w_star[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn deterministic_per_seed() {
        let task = QuadraticTask::new(3, 2, 1.0);
        let a = generate_quadratic_federation(&task, 42).unwrap();
        let b = generate_quadratic_federation(&task, 42).unwrap();
        let c = generate_quadratic_federation(&task, 43).unwrap();
        assert_eq!(a.w_star, b.w_star);
        assert_ne!(a.w_star, c.w_star);
    }

    #[test]
    fn logistic_optimum_is_stationary() {
        let fed = generate_logistic_federation(&LogisticTask::new(5, 4, 60, 1.0), 1).unwrap();
        assert_eq!(fed.dim(), 5);
        assert!(fed.optimality_residual().unwrap() <= 1e-8);
        let federation = fed.to_federation(&[1.0; 5], &[0.0; 5]).unwrap();
        let acc = federation.global_accuracy(&fed.w_star).unwrap().unwrap();
        assert!(acc > 0.7, "accuracy {acc}");
    }

    #[test]
    fn explicit_weights_are_used() {
        let mut task = QuadraticTask::new(2, 1, 1.0);
        task.weights = Some(vec![0.25, 0.75]);
        let fed = generate_quadratic_federation(&task, 9).unwrap();
        assert_relative_eq!(fed.weights[1], 0.75);
        assert!(fed.optimality_residual().unwrap() <= 1e-12);
        task.weights = Some(vec![0.5, 0.6]);
        assert!(generate_quadratic_federation(&task, 9).is_err());
    }

    #[test]
    fn rejects_bad_tasks() {
        assert!(generate_quadratic_federation(&QuadraticTask::new(0, 1, 0.0), 0).is_err());
        assert!(generate_quadratic_federation(&QuadraticTask::new(1, 0, 0.0), 0).is_err());
        assert!(generate_quadratic_federation(&QuadraticTask::new(1, 1, -1.0), 0).is_err());
        let mut t = LogisticTask::new(2, 2, 10, 0.0);
        t.ridge = 0.0;
        assert!(generate_logistic_federation(&t, 0).is_err());
    }
}
