//! Reference models: Item-kNN, EASE^R, RP3β, a truncated-SVD GF-CF, and
//! the MostPop/Random scorers.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{InteractionMatrix, NormalizedView};
use crate::model::{GlobalFactor, InputScaling, Params, SimilarityModel, SparseSim};
use crate::spectral::{top_eigenpairs, EigConfig, SpectralError};

pub use crate::model::{popularity_scores, random_scores, ScorerModel};

pub const DEFAULT_NEIGHBORS: usize = 100;
pub const DEFAULT_DENSE_LIMIT: usize = 30_000;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("{model} needs a dense {n_items}x{n_items} solve, above the limit of {limit} items")]
    TooLarge {
        model: &'static str,
        n_items: usize,
        limit: usize,
    },
    #[error("invalid hyperparameter: {0}")]
    Param(String),
    #[error("linear system is not positive definite")]
    Singular,
    #[error("dense symmetric eigensolver did not converge")]
    Eigen,
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

fn params(pairs: &[(&str, serde_json::Value)]) -> Params {
    pairs.iter().map(|(k, v)| ((*k).to_owned(), v.clone())).collect()
}

/// Keeps the `k` best entries by value (or by magnitude), ties by ascending
/// column.
pub(crate) fn top_k(mut row: Vec<(usize, f64)>, k: usize, by_magnitude: bool) -> Vec<(usize, f64)> {
    let key = |v: f64| if by_magnitude { v.abs() } else { v };
    row.sort_by(|a, b| key(b.1).total_cmp(&key(a.1)).then(a.0.cmp(&b.0)));
    row.truncate(k);
    row
}

/// Accumulates `Σ_u weight(u) · [u∈col(i)] · [u∈col(j)]` for all `j`.
fn cooccurrence_row(
    train: &InteractionMatrix,
    i: usize,
    user_weight: impl Fn(usize) -> f64,
    acc: &mut [f64],
    touched: &mut Vec<usize>,
) {
    for &u in train.col(i) {
        let w = user_weight(u as usize);
        for &j in train.row(u as usize) {
            let j = j as usize;
            if acc[j] == 0.0 {
                touched.push(j);
            }
            acc[j] += w;
        }
    }
}

/// Builds one sparse row per item in parallel, with a reusable dense
/// accumulator per worker.
fn build_rows<F>(train: &InteractionMatrix, row_fn: F) -> Vec<Vec<(usize, f64)>>
where
    F: Fn(usize, &mut [f64], &mut Vec<usize>) -> Vec<(usize, f64)> + Sync,
{
    let n = train.n_items();
    (0..n)
        .into_par_iter()
        .map_init(
            || (vec![0.0; n], Vec::new()),
            |(acc, touched), i| {
                let row = row_fn(i, acc, touched);
                for &j in touched.iter() {
                    acc[j] = 0.0;
                }
                touched.clear();
                row
            },
        )
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ItemKnnConfig {
    pub neighbors: usize,
    pub shrink: f64,
}

impl Default for ItemKnnConfig {
    fn default() -> Self {
        Self {
            neighbors: DEFAULT_NEIGHBORS,
            shrink: 0.0,
        }
    }
}

/// Shrunk cosine `dot(i,j) / (‖i‖‖j‖ + shrink)`, top-k per row.
pub fn itemknn_fit(train: &InteractionMatrix, cfg: &ItemKnnConfig) -> Result<SimilarityModel, FitError> {
    if cfg.neighbors == 0 {
        return Err(FitError::Param("neighbors must be at least 1".into()));
    }
    if cfg.shrink < 0.0 {
        return Err(FitError::Param("shrink must be non-negative".into()));
    }
    let norms: Vec<f64> = train.item_degrees().iter().map(|&d| (d as f64).sqrt()).collect();
    let rows = build_rows(train, |i, acc, touched| {
        cooccurrence_row(train, i, |_| 1.0, acc, touched);
        let row = touched
            .iter()
            .filter(|&&j| j != i)
            .map(|&j| (j, acc[j] / (norms[i] * norms[j] + cfg.shrink)))
            .filter(|&(_, v)| v > 0.0)
            .collect();
        top_k(row, cfg.neighbors, false)
    });
    Ok(SimilarityModel::new(
        "itemknn",
        params(&[("neighbors", cfg.neighbors.into()), ("shrink", cfg.shrink.into())]),
        SparseSim::from_rows(train.n_items(), rows),
    ))
}

/// EASE closed form on a Gram matrix: `P = (G + l2·I)^-1`,
/// `B = I − P·diag(1/diag P)`, diagonal exactly zero.
pub(crate) fn ease_closed_form(gram: &DMatrix<f64>, l2: f64) -> Result<DMatrix<f64>, FitError> {
    let n = gram.nrows();
    let mut a = gram.clone();
    for i in 0..n {
        a[(i, i)] += l2;
    }
    let p = a.cholesky().ok_or(FitError::Singular)?.inverse();
    let mut b = DMatrix::zeros(n, n);
    for j in 0..n {
        let pjj = p[(j, j)];
        for i in 0..n {
            if i != j {
                b[(i, j)] = -p[(i, j)] / pjj;
            }
        }
    }
    Ok(b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EaseConfig {
    pub l2: f64,
    /// Drop entries with `|B_ij|` below this value.
    pub threshold: f64,
    pub dense_limit: usize,
}

impl Default for EaseConfig {
    fn default() -> Self {
        Self {
            l2: 500.0,
            threshold: 0.0,
            dense_limit: DEFAULT_DENSE_LIMIT,
        }
    }
}

pub fn ease_fit(train: &InteractionMatrix, cfg: &EaseConfig) -> Result<SimilarityModel, FitError> {
    if !(cfg.l2 > 0.0) {
        return Err(FitError::Param("l2 must be positive".into()));
    }
    let n = train.n_items();
    if n > cfg.dense_limit {
        return Err(FitError::TooLarge {
            model: "ease",
            n_items: n,
            limit: cfg.dense_limit,
        });
    }
    let items: Vec<usize> = (0..n).collect();
    let b = ease_closed_form(&train.gram_dense(&items), cfg.l2)?;
    let rows = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i && b[(i, j)].abs() >= cfg.threshold)
                .map(|j| (j, b[(i, j)]))
                .collect()
        })
        .collect();
    Ok(SimilarityModel::new(
        "ease",
        params(&[("l2", cfg.l2.into()), ("threshold", cfg.threshold.into())]),
        SparseSim::from_rows(n, rows),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Rp3BetaConfig {
    pub neighbors: usize,
    pub beta: f64,
}

impl Default for Rp3BetaConfig {
    fn default() -> Self {
        Self {
            neighbors: DEFAULT_NEIGHBORS,
            beta: 0.5,
        }
    }
}

/// Two-step item→user→item random walk, `W_ij = Σ_u P(u|i)·P(j|u)`, with
/// column `j` divided by `deg(j)^beta`.
pub fn rp3beta_fit(train: &InteractionMatrix, cfg: &Rp3BetaConfig) -> Result<SimilarityModel, FitError> {
    if cfg.neighbors == 0 {
        return Err(FitError::Param("neighbors must be at least 1".into()));
    }
    if cfg.beta < 0.0 {
        return Err(FitError::Param("beta must be non-negative".into()));
    }
    let udeg = train.user_degrees();
    let ideg = train.item_degrees();
    let popularity: Vec<f64> = ideg
        .iter()
        .map(|&d| if d == 0 { 0.0 } else { (d as f64).powf(-cfg.beta) })
        .collect();
    let rows = build_rows(train, |i, acc, touched| {
        cooccurrence_row(train, i, |u| 1.0 / udeg[u] as f64, acc, touched);
        let from = 1.0 / ideg[i] as f64;
        let row = touched
            .iter()
            .filter(|&&j| j != i)
            .map(|&j| (j, acc[j] * from * popularity[j]))
            .filter(|&(_, v)| v > 0.0)
            .collect();
        top_k(row, cfg.neighbors, false)
    });
    Ok(SimilarityModel::new(
        "rp3beta",
        params(&[("neighbors", cfg.neighbors.into()), ("beta", cfg.beta.into())]),
        SparseSim::from_rows(train.n_items(), rows),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GfcfConfig {
    pub rank: usize,
    pub linear_weight: f64,
    /// Top-k pruning of the linear term; `None` keeps every entry.
    pub neighbors: Option<usize>,
    pub eig: EigConfig,
}

impl Default for GfcfConfig {
    fn default() -> Self {
        Self {
            rank: 64,
            linear_weight: 0.3,
            neighbors: Some(DEFAULT_NEIGHBORS),
            eig: EigConfig::default(),
        }
    }
}

/// `score_u = r̃_u·(linear_weight·R̃ᵀR̃ + V_d V_dᵀ)` with `R̃` the
/// symmetrically degree-normalised matrix and `V_d` its top right singular
/// vectors.
pub fn gfcf_fit(train: &InteractionMatrix, cfg: &GfcfConfig) -> Result<SimilarityModel, FitError> {
    let max_rank = train.n_users().min(train.n_items());
    if cfg.rank == 0 || cfg.rank > max_rank {
        return Err(FitError::Param(format!("rank must lie in [1, {max_rank}]")));
    }
    let view = NormalizedView::new(train, 0.5, 0.5);
    let n = train.n_items();
    let sparse = if cfg.linear_weight == 0.0 {
        SparseSim::empty(n)
    } else {
        let rows = build_rows(train, |i, acc, touched| {
            cooccurrence_row(train, i, |u| view.user_weight(u).powi(2), acc, touched);
            let wi = view.item_weight(i);
            let row: Vec<(usize, f64)> = touched
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| (j, cfg.linear_weight * acc[j] * wi * view.item_weight(j)))
                .collect();
            match cfg.neighbors {
                Some(k) => top_k(row, k, true),
                None => row,
            }
        });
        SparseSim::from_rows(n, rows)
    };
    let basis = top_eigenpairs(&view.gram(), cfg.rank, &cfg.eig)?;
    let mut model = SimilarityModel::new(
        "gfcf",
        params(&[
            ("rank", cfg.rank.into()),
            ("linear_weight", cfg.linear_weight.into()),
            (
                "neighbors",
                cfg.neighbors.map_or(serde_json::Value::Null, Into::into),
            ),
        ]),
        sparse,
    );
    model.global = Some(GlobalFactor {
        weights: vec![1.0; basis.len()],
        vectors: basis.vectors,
        lambda: 1.0,
    });
    model.scaling = Some(InputScaling {
        user_exponent: 0.5,
        item_weights: (0..n).map(|i| view.item_weight(i)).collect(),
    });
    Ok(model)
}
