//! Synthetic federations with known optima, non-IID partitioning and CSV
//! ingestion for tabular classification data.

mod partition;
mod synthetic;
mod tabular;

pub use partition::{partition_indices, partition_noniid, PartitionMethod, PartitionSpec};
pub use synthetic::{
    generate_logistic_federation, generate_quadratic_federation, LogisticTask, QuadraticTask,
    SyntheticFederation,
};
pub use tabular::{
    load_csv, nslkdd_schema, ColumnKind, ColumnSpec, DatasetSchema, MinMaxScaler,
    UnknownCategoryPolicy,
};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::federation::{ClientState, Federation};
use crate::objectives::{ObjectiveSpec, SmoothnessConstants};

/// How a feature column was produced from the raw file.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric,
    OneHot,
}

/// Dense feature matrix with integer class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularDataset {
    pub features: DMatrix<f64>,
    pub labels: Vec<usize>,
    pub feature_names: Vec<String>,
    pub feature_kinds: Vec<FeatureKind>,
    pub class_names: Vec<String>,
}

impl TabularDataset {
    pub fn new(
        features: DMatrix<f64>,
        labels: Vec<usize>,
        feature_names: Vec<String>,
        feature_kinds: Vec<FeatureKind>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if labels.len() != features.nrows() {
            return Err(Error::DimensionMismatch {
                expected: features.nrows(),
                found: labels.len(),
            });
        }
        if feature_names.len() != features.ncols() || feature_kinds.len() != features.ncols() {
            return Err(Error::invalid(
                "one name and kind per feature column required",
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= class_names.len()) {
            return Err(Error::invalid(format!(
                "label {bad} outside {} classes",
                class_names.len()
            )));
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("dataset features".into()));
        }
        Ok(Self {
            features,
            labels,
            feature_names,
            feature_kinds,
            class_names,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let features = self.features.select_rows(indices);
        Self {
            features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
            feature_kinds: self.feature_kinds.clone(),
            class_names: self.class_names.clone(),
        }
    }

    /// Logistic objective for `positive_class` versus the rest, with a bias
    /// column of ones appended.
    pub fn to_logistic(&self, positive_class: usize, ridge: f64) -> Result<ObjectiveSpec> {
        if positive_class >= self.num_classes() {
            return Err(Error::invalid(format!("no class {positive_class}")));
        }
        let (n, d) = self.features.shape();
        let x = DMatrix::from_fn(
            n,
            d + 1,
            |r, c| if c < d { self.features[(r, c)] } else { 1.0 },
        );
        let y = self
            .labels
            .iter()
            .map(|&l| if l == positive_class { 1.0 } else { -1.0 })
            .collect();
        ObjectiveSpec::logistic(x, y, ridge)
    }
}

/// Federation of logistic clients built from partitioned tabular data with
/// data-proportional weights `pᵢ = |Dᵢ| / Σ|Dⱼ|` unless `weights` is given.
pub fn tabular_federation(
    parts: &[TabularDataset],
    positive_class: usize,
    ridge: f64,
    step_costs: &[f64],
    comm_delays: &[f64],
    weights: Option<&[f64]>,
) -> Result<Federation> {
    let n = parts.len();
    if step_costs.len() != n || comm_delays.len() != n {
        return Err(Error::invalid(
            "cost model length must match the client count",
        ));
    }
    let total: usize = parts.iter().map(TabularDataset::len).sum();
    let weights: Vec<f64> = match weights {
        Some(w) => w.to_vec(),
        None => parts
            .iter()
            .map(|p| p.len() as f64 / total as f64)
            .collect(),
    };
    if weights.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: weights.len(),
        });
    }
    let objectives = parts
        .iter()
        .map(|p| p.to_logistic(positive_class, ridge))
        .collect::<Result<Vec<_>>>()?;
    let dim = objectives[0].dim();
    let center = crate::vector::ParamVector::zeros(dim);
    let constants = SmoothnessConstants::worst_case(
        objectives
            .iter()
            .map(|o| o.smoothness_constants(1.0, &center))
            .collect::<Result<Vec<_>>>()?,
    )
    .ok_or_else(|| Error::invalid("no clients"))?;
    let w_star = if ridge > 0.0 {
        Some(synthetic::newton_optimum(&objectives, &weights)?)
    } else {
        None
    };
    let clients = objectives
        .into_iter()
        .enumerate()
        .map(|(i, o)| ClientState::new(i, weights[i], step_costs[i], comm_delays[i], o))
        .collect::<Result<Vec<_>>>()?;
    Federation::new(clients, w_star, constants)
}
