//! Client loss functions with exact first- and second-order oracles.
//!
//! Every objective exposes its value, full-batch gradient, analytic
//! Hessian-vector product and closed-form smoothness constants on a ball, so
//! the error identities and bounds elsewhere in the crate can be checked
//! against ground truth.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::vector::ParamVector;

/// Largest value of `|φ'''(z)|` for the logistic loss `φ(z) = ln(1 + e^{-z})`,
/// attained where `σ(z) = ½ ± 1/(2√3)`.
const LOGISTIC_THIRD_DERIVATIVE_MAX: f64 = 0.096_225_044_864_937_6;

#[derive(Clone, Debug)]
pub enum ObjectiveKind {
    /// `½ wᵀAw − bᵀw + offset`
    Quadratic {
        a: DMatrix<f64>,
        b: ParamVector,
        offset: f64,
    },
    /// Mean logistic loss over rows of `features` with ±1 labels, plus
    /// `(ridge/2)‖w‖²`.
    Logistic {
        features: DMatrix<f64>,
        labels: Vec<f64>,
        ridge: f64,
    },
    /// `scale · ‖w − center‖⁴`
    Quartic { center: ParamVector, scale: f64 },
    /// Separable `Σⱼ exp(wⱼ)`; a one-dimensional instance is the textbook
    /// non-quadratic test function for the GDA remainder.
    Exponential,
}

/// Ball on which smoothness constants are evaluated.
#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    pub center: ParamVector,
    pub radius: f64,
}

impl Region {
    pub fn new(center: ParamVector, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid(format!(
                "region radius must be positive, got {radius}"
            )));
        }
        center.ensure_finite("region center")?;
        Ok(Self { center, radius })
    }

    pub fn contains(&self, w: &ParamVector) -> bool {
        (w - &self.center).norm() <= self.radius * (1.0 + 1e-12)
    }

    /// Smallest ball containing the segment `[w, w + delta]`.
    pub fn enclosing_segment(w: &ParamVector, delta: &ParamVector) -> Self {
        let mut center = w.clone();
        center.axpy(0.5, delta);
        // A degenerate segment still needs a positive radius.
        let radius = (0.5 * delta.norm()).max(f64::MIN_POSITIVE);
        Self { center, radius }
    }
}

/// Smoothness constants valid on a region.
///
/// `lipschitz` bounds the gradient's Lipschitz constant (largest Hessian
/// eigenvalue), `mu` the strong convexity (smallest eigenvalue), `grad_bound`
/// the gradient norm. `hessian_lipschitz` bounds how fast the Hessian itself
/// changes; it is what the integral-remainder argument behind the GDA bound
/// actually consumes.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SmoothnessConstants {
    pub lipschitz: f64,
    pub mu: f64,
    pub grad_bound: f64,
    pub hessian_lipschitz: f64,
}

impl SmoothnessConstants {
    pub fn new(lipschitz: f64, mu: f64, grad_bound: f64) -> Self {
        Self {
            lipschitz,
            mu,
            grad_bound,
            hessian_lipschitz: 0.0,
        }
    }

    /// Single constant `L` satisfying both the gradient-Lipschitz assumption
    /// and the Hessian-Lipschitz step of the GDA remainder bound.
    pub fn gda_lipschitz(&self) -> f64 {
        self.lipschitz.max(self.hessian_lipschitz)
    }

    /// Element-wise worst case over several objectives (max of the upper
    /// constants, min of `mu`).
    pub fn worst_case<I: IntoIterator<Item = SmoothnessConstants>>(items: I) -> Option<Self> {
        items.into_iter().reduce(|a, b| Self {
            lipschitz: a.lipschitz.max(b.lipschitz),
            mu: a.mu.min(b.mu),
            grad_bound: a.grad_bound.max(b.grad_bound),
            hessian_lipschitz: a.hessian_lipschitz.max(b.hessian_lipschitz),
        })
    }
}

#[derive(Clone, Debug)]
pub struct ObjectiveSpec {
    kind: ObjectiveKind,
    dim: usize,
    region: Option<Region>,
}

impl ObjectiveSpec {
    /// `½ wᵀAw − bᵀw`. `a` must be symmetric positive semidefinite.
    pub fn quadratic(a: DMatrix<f64>, b: ParamVector) -> Result<Self> {
        Self::quadratic_with_offset(a, b, 0.0)
    }

    pub fn quadratic_with_offset(a: DMatrix<f64>, b: ParamVector, offset: f64) -> Result<Self> {
        let dim = b.dim();
        if dim == 0 {
            return Err(Error::invalid("objective dimension must be positive"));
        }
        if a.nrows() != dim || a.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: a.nrows().max(a.ncols()),
            });
        }
        if a.iter().any(|x| !x.is_finite()) || !b.is_finite() || !offset.is_finite() {
            return Err(Error::NonFinite("quadratic coefficients".into()));
        }
        let scale = a.amax().max(1.0);
        if (&a - a.transpose()).amax() > 1e-12 * scale {
            return Err(Error::invalid("quadratic matrix is not symmetric"));
        }
        let min_eig = SymmetricEigen::new(a.clone()).eigenvalues.min();
        if min_eig < -1e-10 * scale {
            return Err(Error::invalid(format!(
                "quadratic matrix is not positive semidefinite (λ_min = {min_eig})"
            )));
        }
        Ok(Self {
            kind: ObjectiveKind::Quadratic { a, b, offset },
            dim,
            region: None,
        })
    }

    /// `½ (w − m)ᵀA(w − m)`, minimized at `m` with value 0.
    pub fn quadratic_centered(a: DMatrix<f64>, minimizer: &ParamVector) -> Result<Self> {
        minimizer.ensure_dim(a.nrows())?;
        let b = ParamVector::from_dvector(&a * minimizer.as_dvector());
        let offset = 0.5 * minimizer.dot(&b);
        Self::quadratic_with_offset(a, b, offset)
    }

    pub fn logistic(features: DMatrix<f64>, labels: Vec<f64>, ridge: f64) -> Result<Self> {
        let (n, dim) = features.shape();
        if n == 0 || dim == 0 {
            return Err(Error::invalid(
                "logistic objective needs at least one sample and feature",
            ));
        }
        if labels.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: labels.len(),
            });
        }
        if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
            return Err(Error::invalid("logistic labels must be ±1"));
        }
        if !(ridge >= 0.0 && ridge.is_finite()) {
            return Err(Error::invalid(format!(
                "ridge must be nonnegative, got {ridge}"
            )));
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("logistic features".into()));
        }
        Ok(Self {
            kind: ObjectiveKind::Logistic {
                features,
                labels,
                ridge,
            },
            dim,
            region: None,
        })
    }

    pub fn quartic(center: ParamVector, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::invalid(format!(
                "quartic scale must be positive, got {scale}"
            )));
        }
        if center.dim() == 0 {
            return Err(Error::invalid("objective dimension must be positive"));
        }
        center.ensure_finite("quartic center")?;
        let dim = center.dim();
        Ok(Self {
            kind: ObjectiveKind::Quartic { center, scale },
            dim,
            region: None,
        })
    }

    pub fn exponential(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("objective dimension must be positive"));
        }
        Ok(Self {
            kind: ObjectiveKind::Exponential,
            dim,
            region: None,
        })
    }

    pub fn with_region(mut self, region: Region) -> Result<Self> {
        region.center.ensure_dim(self.dim)?;
        self.region = Some(region);
        Ok(self)
    }

    pub fn kind(&self) -> &ObjectiveKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn region(&self) -> Option<&Region> {
        self.region.as_ref()
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self.kind, ObjectiveKind::Quadratic { .. })
    }

    fn check_point(&self, w: &ParamVector) -> Result<()> {
        w.ensure_dim(self.dim)?;
        w.ensure_finite("objective input")
    }

    pub fn value(&self, w: &ParamVector) -> Result<f64> {
        self.check_point(w)?;
        let v = match &self.kind {
            ObjectiveKind::Quadratic { a, b, offset } => {
                let x = w.as_dvector();
                0.5 * x.dot(&(a * x)) - b.dot(w) + offset
            }
            ObjectiveKind::Logistic {
                features,
                labels,
                ridge,
            } => {
                let margins = features * w.as_dvector();
                let n = labels.len() as f64;
                let data: f64 = margins
                    .iter()
                    .zip(labels)
                    .map(|(&m, &y)| softplus(-y * m))
                    .sum();
                data / n + 0.5 * ridge * w.norm_squared()
            }
            ObjectiveKind::Quartic { center, scale } => {
                let r2 = (w - center).norm_squared();
                scale * r2 * r2
            }
            ObjectiveKind::Exponential => w.iter().map(|x| x.exp()).sum(),
        };
        Ok(v)
    }

    pub fn gradient(&self, w: &ParamVector) -> Result<ParamVector> {
        self.check_point(w)?;
        let g = match &self.kind {
            ObjectiveKind::Quadratic { a, b, .. } => {
                ParamVector::from_dvector(a * w.as_dvector() - b.as_dvector())
            }
            ObjectiveKind::Logistic {
                features,
                labels,
                ridge,
            } => {
                let margins = features * w.as_dvector();
                let n = labels.len() as f64;
                // dφ(y m)/dm = −y σ(−y m)
                let coeffs = DVector::from_iterator(
                    labels.len(),
                    margins
                        .iter()
                        .zip(labels)
                        .map(|(&m, &y)| -y * sigmoid(-y * m) / n),
                );
                let mut g = features.tr_mul(&coeffs);
                g.axpy(*ridge, w.as_dvector(), 1.0);
                ParamVector::from_dvector(g)
            }
            ObjectiveKind::Quartic { center, scale } => {
                let x = w - center;
                let r2 = x.norm_squared();
                x.scaled(4.0 * scale * r2)
            }
            ObjectiveKind::Exponential => {
                ParamVector::from_vec(w.iter().map(|x| x.exp()).collect())
            }
        };
        Ok(g)
    }

    /// Exact `∇²F(w)·delta`.
    pub fn hessian_vector(&self, w: &ParamVector, delta: &ParamVector) -> Result<ParamVector> {
        self.check_point(w)?;
        self.check_point(delta)?;
        let hv = match &self.kind {
            ObjectiveKind::Quadratic { a, .. } => ParamVector::from_dvector(a * delta.as_dvector()),
            ObjectiveKind::Logistic {
                features,
                labels,
                ridge,
            } => {
                let margins = features * w.as_dvector();
                let proj = features * delta.as_dvector();
                let n = labels.len() as f64;
                let coeffs = DVector::from_iterator(
                    labels.len(),
                    margins.iter().zip(proj.iter()).map(|(&m, &p)| {
                        let s = sigmoid(m);
                        s * (1.0 - s) * p / n
                    }),
                );
                let mut hv = features.tr_mul(&coeffs);
                hv.axpy(*ridge, delta.as_dvector(), 1.0);
                ParamVector::from_dvector(hv)
            }
            ObjectiveKind::Quartic { center, scale } => {
                // 4s (‖x‖² δ + 2 x xᵀδ)
                let x = w - center;
                let mut hv = delta.scaled(x.norm_squared());
                hv.axpy(2.0 * x.dot(delta), &x);
                hv.scaled(4.0 * scale)
            }
            ObjectiveKind::Exponential => ParamVector::from_vec(
                w.iter()
                    .zip(delta.iter())
                    .map(|(x, d)| x.exp() * d)
                    .collect(),
            ),
        };
        Ok(hv)
    }

    /// Closed-form constants on the ball `‖w − center‖ ≤ radius`.
    ///
    /// Quadratic: `lipschitz`/`mu` are the extreme eigenvalues of `A`,
    /// `grad_bound = ‖A c − b‖ + λ_max R`.
    /// Logistic: `lipschitz = λ_max(XᵀX)/(4n) + ridge`, `mu = ridge`,
    /// `grad_bound = mean‖xⱼ‖ + ridge (‖c‖ + R)`.
    /// Quartic: with `r` the largest distance from the quartic center,
    /// `lipschitz = 12 s r²`, `grad_bound = 4 s r³`, `hessian_lipschitz = 24 s r`.
    /// Exponential: `exp` of the largest coordinate reachable in the ball.
    pub fn smoothness_constants(
        &self,
        radius: f64,
        center: &ParamVector,
    ) -> Result<SmoothnessConstants> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid(format!(
                "region radius must be positive, got {radius}"
            )));
        }
        self.check_point(center)?;
        let c = match &self.kind {
            ObjectiveKind::Quadratic { a, b, .. } => {
                let eig = SymmetricEigen::new(a.clone()).eigenvalues;
                let l = eig.max().max(0.0);
                let mu = eig.min().max(0.0);
                let g_center = (a * center.as_dvector() - b.as_dvector()).norm();
                SmoothnessConstants {
                    lipschitz: l,
                    mu,
                    grad_bound: g_center + l * radius,
                    hessian_lipschitz: 0.0,
                }
            }
            ObjectiveKind::Logistic {
                features,
                labels,
                ridge,
            } => {
                let n = labels.len() as f64;
                let gram = features.tr_mul(features);
                let lmax = SymmetricEigen::new(gram).eigenvalues.max().max(0.0);
                let row_norms: Vec<f64> = features.row_iter().map(|r| r.norm()).collect();
                let mean_norm = row_norms.iter().sum::<f64>() / n;
                let mean_cube = row_norms.iter().map(|r| r * r * r).sum::<f64>() / n;
                SmoothnessConstants {
                    lipschitz: 0.25 * lmax / n + ridge,
                    mu: *ridge,
                    grad_bound: mean_norm + ridge * (center.norm() + radius),
                    hessian_lipschitz: LOGISTIC_THIRD_DERIVATIVE_MAX * mean_cube,
                }
            }
            ObjectiveKind::Quartic { center: qc, scale } => {
                let dist = (center - qc).norm();
                let r_hi = dist + radius;
                let r_lo = (dist - radius).max(0.0);
                SmoothnessConstants {
                    lipschitz: 12.0 * scale * r_hi * r_hi,
                    mu: 4.0 * scale * r_lo * r_lo,
                    grad_bound: 4.0 * scale * r_hi.powi(3),
                    hessian_lipschitz: 24.0 * scale * r_hi,
                }
            }
            ObjectiveKind::Exponential => {
                let hi: Vec<f64> = center.iter().map(|c| (c + radius).exp()).collect();
                let l = hi.iter().cloned().fold(0.0, f64::max);
                let mu = center
                    .iter()
                    .map(|c| (c - radius).exp())
                    .fold(f64::INFINITY, f64::min);
                SmoothnessConstants {
                    lipschitz: l,
                    mu,
                    grad_bound: hi.iter().map(|h| h * h).sum::<f64>().sqrt(),
                    hessian_lipschitz: l,
                }
            }
        };
        Ok(c)
    }

    pub fn constants_on(&self, region: &Region) -> Result<SmoothnessConstants> {
        self.smoothness_constants(region.radius, &region.center)
    }

    /// Exact minimizer `A⁻¹b` of a positive-definite quadratic.
    pub fn quadratic_minimizer(&self) -> Option<ParamVector> {
        match &self.kind {
            ObjectiveKind::Quadratic { a, b, .. } => a
                .clone()
                .cholesky()
                .map(|ch| ParamVector::from_dvector(ch.solve(b.as_dvector()))),
            _ => None,
        }
    }

    /// Fraction of samples classified correctly by `sign(xᵀw)`; `None` for
    /// objectives without samples.
    pub fn accuracy(&self, w: &ParamVector) -> Result<Option<f64>> {
        self.check_point(w)?;
        match &self.kind {
            ObjectiveKind::Logistic {
                features, labels, ..
            } => {
                let margins = features * w.as_dvector();
                let correct = margins
                    .iter()
                    .zip(labels)
                    .filter(|(&m, &y)| if y > 0.0 { m > 0.0 } else { m <= 0.0 })
                    .count();
                Ok(Some(correct as f64 / labels.len() as f64))
            }
            _ => Ok(None),
        }
    }

    pub fn num_samples(&self) -> Option<usize> {
        match &self.kind {
            ObjectiveKind::Logistic { labels, .. } => Some(labels.len()),
            _ => None,
        }
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::from_slice(v)
    }

    fn identity_quadratic(b: &[f64]) -> ObjectiveSpec {
        ObjectiveSpec::quadratic(DMatrix::identity(b.len(), b.len()), pv(b)).unwrap()
    }

    fn random_point(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> ParamVector {
        ParamVector::from_vec((0..d).map(|_| rng.random_range(-scale..scale)).collect())
    }

    fn sample_objectives(rng: &mut ChaCha8Rng) -> Vec<ObjectiveSpec> {
        let d = 3;
        let m = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let a = &m * m.transpose() + DMatrix::identity(d, d) * 0.5;
        let features = DMatrix::from_fn(8, d, |_, _| rng.random_range(-2.0..2.0));
        let labels = (0..8)
            .map(|i| if i % 3 == 0 { -1.0 } else { 1.0 })
            .collect();
        vec![
            ObjectiveSpec::quadratic(a, random_point(rng, d, 1.0)).unwrap(),
            ObjectiveSpec::logistic(features, labels, 0.1).unwrap(),
            ObjectiveSpec::quartic(random_point(rng, d, 1.0), 0.3).unwrap(),
            ObjectiveSpec::exponential(d).unwrap(),
        ]
    }

    #[test]
    fn quadratic_values() {
        let f = identity_quadratic(&[0.0]);
        assert_eq!(f.value(&pv(&[3.0])).unwrap(), 4.5);
        assert_eq!(f.value(&pv(&[0.0])).unwrap(), 0.0);
    }

    #[test]
    fn logistic_value_at_origin_is_ln2() {
        let f = ObjectiveSpec::logistic(DMatrix::from_element(1, 1, 1.0), vec![1.0], 0.0).unwrap();
        assert_relative_eq!(
            f.value(&pv(&[0.0])).unwrap(),
            std::f64::consts::LN_2,
            epsilon = 1e-15
        );
    }

    #[test]
    fn gradient_examples() {
        let f = identity_quadratic(&[3.0]);
        assert_eq!(f.gradient(&pv(&[0.0])).unwrap().to_vec(), vec![-3.0]);
        assert!(f.gradient(&pv(&[3.0])).unwrap().is_zero());

        let q = ObjectiveSpec::quartic(pv(&[0.0]), 0.25).unwrap();
        assert_relative_eq!(q.gradient(&pv(&[1.0])).unwrap()[0], 1.0);
    }

    #[test]
    fn hessian_vector_examples() {
        let f = identity_quadratic(&[0.0]);
        assert_relative_eq!(f.hessian_vector(&pv(&[5.0]), &pv(&[0.2])).unwrap()[0], 0.2);
        let q = ObjectiveSpec::quartic(pv(&[0.0]), 0.25).unwrap();
        assert_relative_eq!(q.hessian_vector(&pv(&[1.0]), &pv(&[1.0])).unwrap()[0], 3.0);
        assert!(q
            .hessian_vector(&pv(&[1.0]), &pv(&[0.0]))
            .unwrap()
            .is_zero());
    }

    #[test]
    fn constants_examples() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0]));
        let f = ObjectiveSpec::quadratic(a, pv(&[0.0, 0.0])).unwrap();
        let c = f.smoothness_constants(1.0, &pv(&[0.0, 0.0])).unwrap();
        assert_relative_eq!(c.lipschitz, 4.0, epsilon = 1e-12);
        assert_relative_eq!(c.mu, 1.0, epsilon = 1e-12);

        let g = identity_quadratic(&[3.0]);
        let c = g.smoothness_constants(3.0, &pv(&[0.0])).unwrap();
        assert_relative_eq!(c.grad_bound, 6.0, epsilon = 1e-12);

        let q = ObjectiveSpec::quartic(pv(&[0.0]), 0.25).unwrap();
        let c = q.smoothness_constants(1.0, &pv(&[0.0])).unwrap();
        assert_relative_eq!(c.lipschitz, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let f = identity_quadratic(&[0.0, 0.0]);
        assert!(matches!(
            f.value(&pv(&[1.0])),
            Err(Error::DimensionMismatch {
                expected: 2,
                found: 1
            })
        ));
        assert!(matches!(
            f.value(&pv(&[f64::NAN, 0.0])),
            Err(Error::NonFinite(_))
        ));
        assert!(f.smoothness_constants(0.0, &pv(&[0.0, 0.0])).is_err());

        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(ObjectiveSpec::quadratic(asym, pv(&[0.0, 0.0])).is_err());
        let indefinite = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        assert!(ObjectiveSpec::quadratic(indefinite, pv(&[0.0, 0.0])).is_err());
        assert!(ObjectiveSpec::logistic(DMatrix::zeros(1, 1), vec![0.0], 0.0).is_err());
        assert!(ObjectiveSpec::logistic(DMatrix::zeros(1, 1), vec![1.0], -1.0).is_err());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = 1e-5;
        for f in sample_objectives(&mut rng) {
            for _ in 0..100 {
                let w = random_point(&mut rng, f.dim(), 1.5);
                let g = f.gradient(&w).unwrap();
                let fd = ParamVector::from_vec(
                    (0..f.dim())
                        .map(|j| {
                            let mut p = w.clone();
                            let mut m = w.clone();
                            p[j] += h;
                            m[j] -= h;
                            (f.value(&p).unwrap() - f.value(&m).unwrap()) / (2.0 * h)
                        })
                        .collect(),
                );
                let rel = (&fd - &g).norm() / g.norm().max(1.0);
                assert!(rel <= 1e-6, "{:?}: rel err {rel}", f.kind());
            }
        }
    }

    #[test]
    fn hessian_vector_matches_directional_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-5;
        for f in sample_objectives(&mut rng) {
            for _ in 0..100 {
                let w = random_point(&mut rng, f.dim(), 1.5);
                let v = random_point(&mut rng, f.dim(), 1.0);
                let hv = f.hessian_vector(&w, &v).unwrap();
                let mut p = w.clone();
                p.axpy(h, &v);
                let mut m = w.clone();
                m.axpy(-h, &v);
                let fd = (&f.gradient(&p).unwrap() - &f.gradient(&m).unwrap()).scaled(0.5 / h);
                let rel = (&fd - &hv).norm() / hv.norm().max(1.0);
                assert!(rel <= 1e-5, "{:?}: rel err {rel}", f.kind());
            }
        }
    }

    #[test]
    fn quadratic_minimizer_is_stationary() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0]);
        let f = ObjectiveSpec::quadratic(a, pv(&[1.0, -2.0, 0.5])).unwrap();
        let w = f.quadratic_minimizer().unwrap();
        assert!(f.gradient(&w).unwrap().norm() <= 1e-10);
    }

    #[test]
    fn sampled_constants_never_exceed_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for f in sample_objectives(&mut rng) {
            let center = random_point(&mut rng, f.dim(), 0.5);
            let radius = 1.0;
            let c = f.smoothness_constants(radius, &center).unwrap();
            for _ in 0..300 {
                let mut dir = random_point(&mut rng, f.dim(), 1.0);
                let n = dir.norm().max(1e-12);
                dir = dir.scaled(rng.random_range(0.0..radius) / n);
                let x = &center + &dir;
                let y = &center + &random_point(&mut rng, f.dim(), radius / 3.0_f64.sqrt());
                let gx = f.gradient(&x).unwrap();
                assert!(gx.norm() <= c.grad_bound * (1.0 + 1e-12));
                let ratio = (&gx - &f.gradient(&y).unwrap()).norm() / (&x - &y).norm();
                assert!(ratio <= c.lipschitz * (1.0 + 1e-9), "{:?}", f.kind());
            }
        }
    }
}
