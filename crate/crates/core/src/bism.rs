//! Block-aware item similarity: `S = S_l + S_g`, fitted by alternating
//! minimisation of
//!
//! ```text
//! ½‖R − R(S_l + S_g)‖² + β_l/2‖S_l‖² + β_g/2‖S_g‖² + α·Σ_{k smallest} eig L(|S_l|)
//! ```
//!
//! with both diagonals fixed at zero. The block term is handled through the
//! usual auxiliary indicator `Z` (bottom-`k` Laplacian eigenvectors): for a
//! fixed `Z` it is linear in a non-negative `S_l`, with coefficient
//! `½‖z_i − z_j‖²` on entry `(i, j)`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{top_k, FitError, DEFAULT_NEIGHBORS};
use crate::data::InteractionMatrix;
use crate::model::{SimilarityModel, SparseSim};

pub const DEFAULT_BISM_LIMIT: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BismConfig {
    pub blocks: usize,
    pub alpha: f64,
    pub beta_g: f64,
    pub beta_l: f64,
    pub max_outer_iters: usize,
    /// Stop once the relative objective change drops below this.
    pub tol: f64,
    pub dense_limit: usize,
    /// Coordinate-descent sweeps per `S_l` update when `alpha > 0`.
    pub inner_sweeps: usize,
    pub neighbors: usize,
}

impl Default for BismConfig {
    fn default() -> Self {
        Self {
            blocks: 8,
            alpha: 1.0,
            beta_g: 200.0,
            beta_l: 50.0,
            max_outer_iters: 10,
            tol: 1e-4,
            dense_limit: DEFAULT_BISM_LIMIT,
            inner_sweeps: 5,
            neighbors: DEFAULT_NEIGHBORS,
        }
    }
}

impl BismConfig {
    fn validate(&self, n: usize) -> Result<(), FitError> {
        let bad = |m: String| Err(FitError::Param(m));
        if n > self.dense_limit {
            return Err(FitError::TooLarge {
                model: "bism",
                n_items: n,
                limit: self.dense_limit,
            });
        }
        if self.blocks == 0 || self.blocks > n {
            return bad(format!("blocks must lie in [1, {n}]"));
        }
        if !(self.alpha >= 0.0) {
            return bad("alpha must be non-negative".into());
        }
        if !(self.beta_g > 0.0 && self.beta_l > 0.0) {
            return bad("beta_g and beta_l must be positive".into());
        }
        if self.neighbors == 0 {
            return bad("neighbors must be at least 1".into());
        }
        Ok(())
    }
}

/// Bottom eigenvectors of a graph Laplacian.
#[derive(Debug, Clone)]
pub struct BdrProjection {
    /// `N×k`, orthonormal columns.
    pub indicator: DMatrix<f64>,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub penalty: f64,
}

/// Relaxed `k`-block indicator of a symmetric non-negative affinity: the
/// eigenvectors of `L = D − A` for its `k` smallest eigenvalues, whose sum
/// is the block penalty. The diagonal of `affinity` is ignored.
pub fn bdr_project(affinity: &DMatrix<f64>, k: usize) -> Result<BdrProjection, FitError> {
    let n = affinity.nrows();
    if k == 0 || k > n {
        return Err(FitError::Param(format!("blocks must lie in [1, {n}]")));
    }
    let mut lap = -affinity.clone();
    for i in 0..n {
        lap[(i, i)] = (0..n).filter(|&j| j != i).map(|j| affinity[(i, j)]).sum();
    }
    let eig = lap.try_symmetric_eigen(1e-14, 10_000).ok_or(FitError::Eigen)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    order.truncate(k);
    let eigenvalues: Vec<f64> = order.iter().map(|&c| eig.eigenvalues[c].max(0.0)).collect();
    let mut indicator = DMatrix::zeros(n, k);
    for (c, &src) in order.iter().enumerate() {
        indicator.set_column(c, &eig.eigenvectors.column(src));
    }
    Ok(BdrProjection {
        penalty: eigenvalues.iter().sum(),
        indicator,
        eigenvalues,
    })
}

/// Final (best) iterate of a BISM run.
#[derive(Debug, Clone)]
pub struct BismState {
    pub s_l: DMatrix<f64>,
    pub s_g: DMatrix<f64>,
    pub aux_indicator: DMatrix<f64>,
    /// Objective at the start and after every outer iteration.
    pub objective_trace: Vec<f64>,
    pub best_iteration: usize,
    pub converged: bool,
    /// Outer iterations whose objective rose by more than `1e-9` relative.
    pub monotone_violations: usize,
}

impl BismState {
    pub fn diagnostics(&self) -> serde_json::Value {
        serde_json::json!({
            "objective_trace": self.objective_trace,
            "iterations": self.objective_trace.len().saturating_sub(1),
            "best_iteration": self.best_iteration,
            "converged": self.converged,
            "monotone_violations": self.monotone_violations,
        })
    }
}

fn symmetric_abs(s: &DMatrix<f64>) -> DMatrix<f64> {
    let n = s.nrows();
    DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 0.5 * (s[(i, j)].abs() + s[(j, i)].abs()) })
}

fn cosine_affinity(gram: &DMatrix<f64>) -> DMatrix<f64> {
    let n = gram.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        let d = (gram[(i, i)] * gram[(j, j)]).sqrt();
        if i == j || d == 0.0 {
            0.0
        } else {
            gram[(i, j)] / d
        }
    })
}

/// Zero-diagonal ridge: column `j` minimises `½sᵀ(G+βI)s − h_jᵀs` subject to
/// `s_j = 0`, giving `S = PH − P·diag(μ)` with `μ_j = (PH)_jj / P_jj`.
fn zero_diagonal_ridge(p: &DMatrix<f64>, h: &DMatrix<f64>) -> DMatrix<f64> {
    let mut s = p * h;
    let n = s.nrows();
    for j in 0..n {
        let mu = s[(j, j)] / p[(j, j)];
        for i in 0..n {
            s[(i, j)] -= mu * p[(i, j)];
        }
        s[(j, j)] = 0.0;
    }
    s
}

fn ridge_inverse(gram: &DMatrix<f64>, beta: f64) -> Result<DMatrix<f64>, FitError> {
    let mut a = gram.clone();
    for i in 0..a.nrows() {
        a[(i, i)] += beta;
    }
    Ok(a.cholesky().ok_or(FitError::Singular)?.inverse())
}

/// Non-negative coordinate descent on every column of `S_l`, warm-started.
/// Column `j` minimises `½sᵀAs − (h_j − α·c_j)ᵀs` over `s ≥ 0, s_j = 0`.
fn nonneg_descent(
    a: &DMatrix<f64>,
    h: &DMatrix<f64>,
    penalty: &DMatrix<f64>,
    alpha: f64,
    start: &DMatrix<f64>,
    sweeps: usize,
) -> DMatrix<f64> {
    let n = a.nrows();
    let cols: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut s: Vec<f64> = (0..n).map(|i| if i == j { 0.0 } else { start[(i, j)].max(0.0) }).collect();
            let mut q = vec![0.0; n];
            for (i, &si) in s.iter().enumerate() {
                if si != 0.0 {
                    for (r, qr) in q.iter_mut().enumerate() {
                        *qr += si * a[(r, i)];
                    }
                }
            }
            for _ in 0..sweeps {
                for i in 0..n {
                    if i == j {
                        continue;
                    }
                    let grad = q[i] - h[(i, j)] + alpha * penalty[(i, j)];
                    let next = (s[i] - grad / a[(i, i)]).max(0.0);
                    let delta = next - s[i];
                    if delta != 0.0 {
                        s[i] = next;
                        for (r, qr) in q.iter_mut().enumerate() {
                            *qr += delta * a[(r, i)];
                        }
                    }
                }
            }
            s
        })
        .collect();
    DMatrix::from_fn(n, n, |i, j| cols[j][i])
}

fn block_coefficients(z: &DMatrix<f64>) -> DMatrix<f64> {
    let n = z.nrows();
    DMatrix::from_fn(n, n, |i, j| 0.5 * (z.row(i) - z.row(j)).norm_squared())
}

struct Objective<'a> {
    gram: &'a DMatrix<f64>,
    cfg: &'a BismConfig,
}

impl Objective<'_> {
    fn value(&self, s_l: &DMatrix<f64>, s_g: &DMatrix<f64>, penalty: f64) -> f64 {
        let n = self.gram.nrows();
        let e = DMatrix::<f64>::identity(n, n) - s_l - s_g;
        let fit = (self.gram * &e).component_mul(&e).sum();
        0.5 * fit
            + 0.5 * self.cfg.beta_l * s_l.norm_squared()
            + 0.5 * self.cfg.beta_g * s_g.norm_squared()
            + self.cfg.alpha * penalty
    }
}

/// Runs the alternating scheme and returns the best iterate.
pub fn bism_solve(train: &InteractionMatrix, cfg: &BismConfig) -> Result<BismState, FitError> {
    let n = train.n_items();
    cfg.validate(n)?;
    let items: Vec<usize> = (0..n).collect();
    let gram = train.gram_dense(&items);
    let objective = Objective { gram: &gram, cfg };
    let p_l = ridge_inverse(&gram, cfg.beta_l)?;
    let p_g = ridge_inverse(&gram, cfg.beta_g)?;
    let mut a_l = gram.clone();
    for i in 0..n {
        a_l[(i, i)] += cfg.beta_l;
    }

    let mut s_l = DMatrix::zeros(n, n);
    let mut s_g = DMatrix::zeros(n, n);
    let mut z = bdr_project(&cosine_affinity(&gram), cfg.blocks)?.indicator;
    let mut trace = vec![objective.value(&s_l, &s_g, 0.0)];
    let mut best = BismState {
        s_l: s_l.clone(),
        s_g: s_g.clone(),
        aux_indicator: z.clone(),
        objective_trace: Vec::new(),
        best_iteration: 0,
        converged: false,
        monotone_violations: 0,
    };
    let mut violations = 0;
    let mut converged = false;

    for iter in 1..=cfg.max_outer_iters {
        let h_l = &gram - &gram * &s_g;
        s_l = if cfg.alpha > 0.0 {
            nonneg_descent(&a_l, &h_l, &block_coefficients(&z), cfg.alpha, &s_l, cfg.inner_sweeps)
        } else {
            zero_diagonal_ridge(&p_l, &h_l)
        };
        let proj = bdr_project(&symmetric_abs(&s_l), cfg.blocks)?;
        z = proj.indicator;
        let h_g = &gram - &gram * &s_l;
        s_g = zero_diagonal_ridge(&p_g, &h_g);

        let prev = *trace.last().expect("trace starts non-empty");
        let cur = objective.value(&s_l, &s_g, proj.penalty);
        trace.push(cur);
        if cur > prev + 1e-9 * prev.abs() {
            violations += 1;
            log::warn!("bism objective rose at iteration {iter}: {prev} -> {cur}");
        }
        if cur <= trace[best.best_iteration] {
            best.s_l = s_l.clone();
            best.s_g = s_g.clone();
            best.aux_indicator = z.clone();
            best.best_iteration = iter;
        }
        if (prev - cur).abs() < cfg.tol * prev.abs() {
            converged = true;
            break;
        }
    }
    best.objective_trace = trace;
    best.converged = converged;
    best.monotone_violations = violations;
    Ok(best)
}

/// Fits BISM and sparsifies `S_l + S_g` to the top entries of each row by
/// magnitude.
pub fn bism_fit(train: &InteractionMatrix, cfg: &BismConfig) -> Result<(SimilarityModel, BismState), FitError> {
    let state = bism_solve(train, cfg)?;
    let n = train.n_items();
    let sum = &state.s_l + &state.s_g;
    let rows = (0..n)
        .map(|i| {
            let row = (0..n)
                .filter(|&j| j != i && sum[(i, j)] != 0.0)
                .map(|j| (j, sum[(i, j)]))
                .collect();
            top_k(row, cfg.neighbors, true)
        })
        .collect();
    let params = [
        ("blocks", cfg.blocks.into()),
        ("alpha", cfg.alpha.into()),
        ("beta_g", cfg.beta_g.into()),
        ("beta_l", cfg.beta_l.into()),
        ("max_outer_iters", cfg.max_outer_iters.into()),
        ("neighbors", cfg.neighbors.into()),
    ]
    .into_iter()
    .map(|(k, v): (&str, serde_json::Value)| (k.to_owned(), v))
    .collect();
    Ok((SimilarityModel::new("bism", params, SparseSim::from_rows(n, rows)), state))
}
