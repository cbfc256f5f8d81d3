use serde::{Deserialize, Serialize};

use super::matrix::InteractionMatrix;
use super::DataError;

/// Summary statistics of an interaction dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    /// Fraction of filled cells, `interactions / (users * items)`.
    pub density: f64,
    pub gini_user: f64,
    pub gini_item: f64,
}

pub fn compute_stats(m: &InteractionMatrix) -> Result<DatasetStats, DataError> {
    if m.is_empty() {
        return Err(DataError::Empty);
    }
    let (users, items, interactions) = (m.n_users(), m.n_items(), m.nnz());
    Ok(DatasetStats {
        users,
        items,
        interactions,
        density: interactions as f64 / (users as f64 * items as f64),
        gini_user: gini(&m.user_degrees()),
        gini_item: gini(&m.item_degrees()),
    })
}

/// Gini coefficient of a count distribution,
/// `G = 2·Σ i·x_(i) / (n·Σx) − (n+1)/n` over ascending counts, `i` from 1.
///
/// The numerator is accumulated in integers so uniform counts give exactly
/// 0 and a single owner among `n` gives exactly `(n−1)/n`. Returns 0 for an
/// empty or all-zero distribution.
pub fn gini(counts: &[usize]) -> f64 {
    let n = counts.len() as i128;
    let total: i128 = counts.iter().map(|&c| c as i128).sum();
    if n == 0 || total == 0 {
        return 0.0;
    }
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let weighted: i128 = sorted
        .iter()
        .enumerate()
        .map(|(k, &c)| (k as i128 + 1) * c as i128)
        .sum();
    let numerator = 2 * weighted - (n + 1) * total;
    numerator as f64 / (n * total) as f64
}
