//! Planted-cluster interaction generator for tests, benchmarks and demos.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::InteractionMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub clusters: usize,
    /// Interaction probability between a user and an item of its cluster.
    pub p_in: f64,
    pub p_out: f64,
    /// Zipf exponent of item popularity inside each cluster; 0 is flat.
    pub popularity_skew: f64,
    /// Relative cluster sizes (items and users); `None` is balanced.
    pub cluster_weights: Option<Vec<f64>>,
    /// Items taken from the end of the catalog that every cluster's users
    /// interact with at `p_in`.
    pub bridges: usize,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            n_users: 1000,
            n_items: 300,
            clusters: 3,
            p_in: 0.1,
            p_out: 0.005,
            popularity_skew: 0.0,
            cluster_weights: None,
            bridges: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedData {
    pub matrix: InteractionMatrix,
    pub item_cluster: Vec<usize>,
    pub user_cluster: Vec<usize>,
    pub bridges: Vec<usize>,
}

/// Contiguous cluster labels for `n` slots with sizes proportional to
/// `weights`.
fn labels(n: usize, weights: &[f64]) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let mut out = Vec::with_capacity(n);
    let mut acc = 0.0;
    for (c, w) in weights.iter().enumerate() {
        acc += w;
        let end = if c + 1 == weights.len() { n } else { ((acc / total) * n as f64).round() as usize };
        while out.len() < end.min(n) {
            out.push(c);
        }
    }
    out
}

pub fn planted(cfg: &PlantedConfig) -> PlantedData {
    assert!(cfg.clusters >= 1, "at least one cluster");
    assert!(cfg.bridges < cfg.n_items, "bridges must leave regular items");
    let weights = cfg.cluster_weights.clone().unwrap_or_else(|| vec![1.0; cfg.clusters]);
    assert_eq!(weights.len(), cfg.clusters, "one weight per cluster");
    let regular = cfg.n_items - cfg.bridges;
    let mut item_cluster = labels(regular, &weights);
    let user_cluster = labels(cfg.n_users, &weights);

    // Popularity multiplier by rank inside the cluster, mean 1.
    let mut popularity = vec![1.0; cfg.n_items];
    if cfg.popularity_skew > 0.0 {
        let mut start = 0;
        while start < regular {
            let c = item_cluster[start];
            let end = (start..regular).find(|&i| item_cluster[i] != c).unwrap_or(regular);
            let raw: Vec<f64> = (0..end - start).map(|r| ((r + 1) as f64).powf(-cfg.popularity_skew)).collect();
            let mean = raw.iter().sum::<f64>() / raw.len() as f64;
            for (k, w) in raw.iter().enumerate() {
                popularity[start + k] = w / mean;
            }
            start = end;
        }
    }
    let bridges: Vec<usize> = (regular..cfg.n_items).collect();
    item_cluster.extend(std::iter::repeat(usize::MAX).take(cfg.bridges));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut pairs = Vec::new();
    for (u, &cu) in user_cluster.iter().enumerate() {
        for (i, &ci) in item_cluster.iter().enumerate() {
            let base = if ci == cu || ci == usize::MAX { cfg.p_in } else { cfg.p_out };
            if rng.gen::<f64>() < (base * popularity[i]).min(1.0) {
                pairs.push((u, i));
            }
        }
    }
    let matrix = InteractionMatrix::from_indices(cfg.n_users, cfg.n_items, pairs).expect("indices in range");
    for b in &bridges {
        item_cluster[*b] = cfg.clusters;
    }
    PlantedData {
        matrix,
        item_cluster,
        user_cluster,
        bridges,
    }
}
