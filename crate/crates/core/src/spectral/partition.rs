use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::fiedler::{fiedler_split, SplitMethod};
use super::lanczos::EigConfig;
use super::SpectralError;
use crate::data::{IdMap, InteractionMatrix, NormalizedView};
use crate::linalg::ceil_fraction;

/// One executed bipartition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub items: Vec<usize>,
    pub coords: Vec<f64>,
    pub method: SplitMethod,
}

/// Item to partition map produced by [`recursive_partition`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionAssignment {
    pub tau: f64,
    pub assignment: Vec<usize>,
    pub sizes: Vec<usize>,
    /// Partition ids holding items without training interactions.
    pub cold: Vec<usize>,
    pub split_trace: Vec<SplitRecord>,
}

impl PartitionAssignment {
    /// Number of partitions.
    pub fn k(&self) -> usize {
        self.sizes.len()
    }

    pub fn n_items(&self) -> usize {
        self.assignment.len()
    }

    /// Items of each partition, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k()];
        for (i, &p) in self.assignment.iter().enumerate() {
            out[p].push(i);
        }
        out
    }

    pub fn is_cold(&self, partition: usize) -> bool {
        self.cold.contains(&partition)
    }

    /// `Σ_k M_k²`.
    pub fn block_cost(&self) -> u64 {
        self.sizes.iter().map(|&m| (m as u64) * (m as u64)).sum()
    }

    /// JSON summary keyed by external item ids.
    pub fn summary(&self, items: &IdMap) -> serde_json::Value {
        let assignment: BTreeMap<&str, usize> = self
            .assignment
            .iter()
            .enumerate()
            .map(|(i, &p)| (items.id(i), p))
            .collect();
        serde_json::json!({
            "tau": self.tau,
            "K": self.k(),
            "sizes": self.sizes,
            "assignment": assignment,
        })
    }
}

/// Splits the catalog until no partition exceeds `⌈tau·N⌉` items.
///
/// Items with no training interactions are set aside in dedicated cold
/// partitions (chunked to respect the bound) whenever the catalog needs
/// splitting at all. Partitions are numbered depth-first, left before right,
/// followed by the cold chunks.
pub fn recursive_partition(
    train: &InteractionMatrix,
    tau: f64,
    eig: &EigConfig,
) -> Result<PartitionAssignment, SpectralError> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(SpectralError::Tau(tau));
    }
    let n = train.n_items();
    let bound = ceil_fraction(tau, n).max(1);
    if n <= bound {
        return Ok(PartitionAssignment {
            tau,
            assignment: vec![0; n],
            sizes: if n == 0 { Vec::new() } else { vec![n] },
            cold: Vec::new(),
            split_trace: Vec::new(),
        });
    }

    let view = NormalizedView::new(train, 0.5, 0.5);
    let (warm, cold): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| train.item_degree(i) > 0);
    let mut parts: Vec<Vec<usize>> = Vec::new();
    let mut trace = Vec::new();
    if !warm.is_empty() {
        split_node(&view, warm, bound, eig, &mut parts, &mut trace)?;
    }
    let mut cold_ids = Vec::new();
    for chunk in cold.chunks(bound) {
        cold_ids.push(parts.len());
        parts.push(chunk.to_vec());
    }

    let mut assignment = vec![0; n];
    for (p, items) in parts.iter().enumerate() {
        for &i in items {
            assignment[i] = p;
        }
    }
    Ok(PartitionAssignment {
        tau,
        assignment,
        sizes: parts.iter().map(Vec::len).collect(),
        cold: cold_ids,
        split_trace: trace,
    })
}

fn split_node(
    view: &NormalizedView<'_>,
    items: Vec<usize>,
    bound: usize,
    eig: &EigConfig,
    parts: &mut Vec<Vec<usize>>,
    trace: &mut Vec<SplitRecord>,
) -> Result<(), SpectralError> {
    if items.len() <= bound {
        parts.push(items);
        return Ok(());
    }
    let split = fiedler_split(view, &items, eig).map_err(|e| SpectralError::Partition {
        node_size: items.len(),
        source: Box::new(e),
    })?;
    debug_assert!(!split.left.is_empty() && !split.right.is_empty());
    trace.push(SplitRecord {
        items,
        coords: split.coords,
        method: split.method,
    });
    split_node(view, split.left, bound, eig, parts, trace)?;
    split_node(view, split.right, bound, eig, parts, trace)
}
