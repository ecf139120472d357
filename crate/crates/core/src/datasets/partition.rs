use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::TabularDataset;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum PartitionMethod {
    /// Each client holds samples of exactly `classes_per_client` classes.
    LabelSkew { classes_per_client: usize },
    /// Per-class client proportions drawn from `Dir(concentration · 1)`.
    Dirichlet { concentration: f64 },
    /// Label-sorted data cut into equal shards, `shards_per_client` each.
    Shard { shards_per_client: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    #[serde(flatten)]
    pub method: PartitionMethod,
    pub num_clients: usize,
    #[serde(default)]
    pub seed: u64,
}

impl PartitionSpec {
    pub fn new(method: PartitionMethod, num_clients: usize, seed: u64) -> Self {
        Self {
            method,
            num_clients,
            seed,
        }
    }
}

/// Splits `data` into disjoint, covering client datasets.
pub fn partition_noniid(
    data: &TabularDataset,
    spec: &PartitionSpec,
) -> Result<Vec<TabularDataset>> {
    Ok(partition_indices(&data.labels, data.num_classes(), spec)?
        .iter()
        .map(|idx| data.subset(idx))
        .collect())
}

/// Client index sets for the given labels. Each set is sorted.
pub fn partition_indices(
    labels: &[usize],
    num_classes: usize,
    spec: &PartitionSpec,
) -> Result<Vec<Vec<usize>>> {
    let n = labels.len();
    let clients = spec.num_clients;
    if clients == 0 {
        return Err(Error::invalid("partition needs at least one client"));
    }
    if clients > n {
        return Err(Error::invalid(format!(
            "{clients} clients but only {n} samples"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &y) in labels.iter().enumerate() {
        if y >= num_classes {
            return Err(Error::invalid(format!(
                "label {y} outside {num_classes} classes"
            )));
        }
        by_class[y].push(i);
    }
    for idx in &mut by_class {
        idx.shuffle(&mut rng);
    }

    let mut parts: Vec<Vec<usize>> = vec![Vec::new(); clients];
    match spec.method {
        PartitionMethod::LabelSkew {
            classes_per_client: k,
        } => {
            let present: Vec<usize> = (0..num_classes)
                .filter(|&c| !by_class[c].is_empty())
                .collect();
            let classes = present.len();
            if k == 0 || k > classes {
                return Err(Error::invalid(format!(
                    "classes_per_client must lie in 1..={classes}, got {k}"
                )));
            }
            if clients * k < classes {
                return Err(Error::invalid(format!(
                    "{clients} clients x {k} classes cannot cover {classes} classes"
                )));
            }
            // round-robin class assignment, wrapping when N·k exceeds the class count
            let mut holders: Vec<Vec<usize>> = vec![Vec::new(); classes];
            for client in 0..clients {
                for j in 0..k {
                    holders[(client * k + j) % classes].push(client);
                }
            }
            for (slot, &class) in present.iter().enumerate() {
                let idx = &by_class[class];
                let h = &holders[slot];
                for (chunk, &client) in even_chunks(idx.len(), h.len()).zip(h) {
                    parts[client].extend_from_slice(&idx[chunk]);
                }
            }
            for (client, part) in parts.iter().enumerate() {
                let mut seen: Vec<usize> = part.iter().map(|&i| labels[i]).collect();
                seen.sort_unstable();
                seen.dedup();
                if !part.is_empty() && seen.len() != k {
                    return Err(Error::invalid(format!(
                        "client {client} received {} classes instead of {k}: too few samples per class",
                        seen.len()
                    )));
                }
            }
        }
        PartitionMethod::Dirichlet { concentration } => {
            if !(concentration > 0.0 && concentration.is_finite()) {
                return Err(Error::invalid("Dirichlet concentration must be positive"));
            }
            let gamma =
                Gamma::new(concentration, 1.0).map_err(|e| Error::invalid(e.to_string()))?;
            for idx in &by_class {
                let draws: Vec<f64> = (0..clients).map(|_| gamma.sample(&mut rng)).collect();
                let total: f64 = draws.iter().sum();
                let mut cum = 0.0;
                let mut start = 0;
                for (client, d) in draws.iter().enumerate() {
                    cum += d / total;
                    let end = if client + 1 == clients {
                        idx.len()
                    } else {
                        ((cum * idx.len() as f64).round() as usize).clamp(start, idx.len())
                    };
                    parts[client].extend_from_slice(&idx[start..end]);
                    start = end;
                }
            }
        }
        PartitionMethod::Shard {
            shards_per_client: s,
        } => {
            let shards = clients * s;
            if s == 0 || shards > n {
                return Err(Error::invalid(format!(
                    "{shards} shards requested for {n} samples"
                )));
            }
            let sorted: Vec<usize> = by_class.concat();
            let mut order: Vec<usize> = (0..shards).collect();
            order.shuffle(&mut rng);
            let bounds: Vec<_> = even_chunks(n, shards).collect();
            for (pos, &shard) in order.iter().enumerate() {
                parts[pos / s].extend_from_slice(&sorted[bounds[shard].clone()]);
            }
        }
    }
    for (client, part) in parts.iter_mut().enumerate() {
        if part.is_empty() {
            return Err(Error::EmptyPartition { client });
        }
        part.sort_unstable();
    }
    Ok(parts)
}

/// `parts` contiguous ranges over `0..len` whose sizes differ by at most one.
fn even_chunks(len: usize, parts: usize) -> impl Iterator<Item = std::ops::Range<usize>> {
    (0..parts).map(move |p| (p * len / parts)..((p + 1) * len / parts))
}
