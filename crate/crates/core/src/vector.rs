//! Dense parameter vectors.
//!
//! [`ParamVector`] is the unit of all model state, gradients, drifts and
//! deviations in the simulator. It wraps an `nalgebra` column vector and
//! serializes as a plain JSON array.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use nalgebra::DVector;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Clone, PartialEq)]
pub struct ParamVector(DVector<f64>);

impl ParamVector {
    pub fn zeros(dim: usize) -> Self {
        Self(DVector::zeros(dim))
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        Self(DVector::from_vec(values))
    }

    pub fn from_slice(values: &[f64]) -> Self {
        Self(DVector::from_column_slice(values))
    }

    pub fn from_dvector(v: DVector<f64>) -> Self {
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn as_dvector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_dvector(self) -> DVector<f64> {
        self.0
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.as_slice().to_vec()
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.0.iter()
    }

    pub fn dot(&self, other: &ParamVector) -> f64 {
        self.0.dot(&other.0)
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn norm_squared(&self) -> f64 {
        self.0.norm_squared()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    /// `self += scale * other`
    pub fn axpy(&mut self, scale: f64, other: &ParamVector) {
        self.0.axpy(scale, &other.0, 1.0);
    }

    pub fn scaled(&self, scale: f64) -> ParamVector {
        Self(&self.0 * scale)
    }

    pub fn ensure_dim(&self, expected: usize) -> Result<()> {
        if self.dim() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: self.dim(),
            });
        }
        Ok(())
    }

    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::NonFinite(what.to_string()));
        }
        Ok(())
    }

    /// Weighted sum `Σ wᵢ vᵢ` of equally sized vectors.
    pub fn weighted_sum<'a, I>(dim: usize, terms: I) -> Result<ParamVector>
    where
        I: IntoIterator<Item = (f64, &'a ParamVector)>,
    {
        let mut out = ParamVector::zeros(dim);
        for (w, v) in terms {
            v.ensure_dim(dim)?;
            out.axpy(w, v);
        }
        Ok(out)
    }
}

impl fmt::Debug for ParamVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

impl Index<usize> for ParamVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for ParamVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        Self::from_vec(v)
    }
}

impl Add<&ParamVector> for &ParamVector {
    type Output = ParamVector;

    fn add(self, rhs: &ParamVector) -> ParamVector {
        ParamVector(&self.0 + &rhs.0)
    }
}

impl Sub<&ParamVector> for &ParamVector {
    type Output = ParamVector;

    fn sub(self, rhs: &ParamVector) -> ParamVector {
        ParamVector(&self.0 - &rhs.0)
    }
}

impl Mul<f64> for &ParamVector {
    type Output = ParamVector;

    fn mul(self, rhs: f64) -> ParamVector {
        ParamVector(&self.0 * rhs)
    }
}

impl Neg for &ParamVector {
    type Output = ParamVector;

    fn neg(self) -> ParamVector {
        ParamVector(-&self.0)
    }
}

impl AddAssign<&ParamVector> for ParamVector {
    fn add_assign(&mut self, rhs: &ParamVector) {
        self.0 += &rhs.0;
    }
}

impl SubAssign<&ParamVector> for ParamVector {
    fn sub_assign(&mut self, rhs: &ParamVector) {
        self.0 -= &rhs.0;
    }
}

impl Serialize for ParamVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_seq(self.0.iter())
    }
}

impl<'de> Deserialize<'de> for ParamVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        Vec::<f64>::deserialize(deserializer).map(ParamVector::from_vec)
    }
}
