//! Lanczos iteration with full reorthogonalisation.
//!
//! A single run grows a Krylov basis from a seeded start vector, restarting
//! with a fresh random direction whenever the space becomes invariant, and
//! stops once the wanted Ritz pairs meet the residual bound. Runs can be
//! deflated against already converged ("locked") vectors; [`top_eigenpairs`]
//! uses that to pick up further copies of repeated eigenvalues.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tridiagonal::tridiagonal_eigen;
use super::SpectralError;
use crate::linalg::{axpy, dot, norm, scale, SymmetricOperator};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EigConfig {
    /// Residual bound `‖Av − λv‖ ≤ tol·max(1, |λ|)`.
    pub tol: f64,
    /// Operator applications allowed; `None` means `30·d`.
    pub max_iter: Option<usize>,
    pub seed: u64,
}

impl Default for EigConfig {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: None,
            seed: 0,
        }
    }
}

impl EigConfig {
    pub fn budget(&self, d: usize) -> usize {
        self.max_iter.unwrap_or(30 * d)
    }
}

/// Leading eigenpairs of a symmetric operator, values descending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenBasis {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
}

impl EigenBasis {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Pair {
    pub value: f64,
    pub vector: Vec<f64>,
    pub residual: f64,
}

pub(crate) fn bound(tol: f64, value: f64) -> f64 {
    tol * value.abs().max(1.0)
}

/// Flips `v` so that its first clearly nonzero coordinate is positive.
pub(crate) fn canonical_sign(v: &mut [f64]) {
    let scale_ref = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-10 * scale_ref) {
        if *first < 0.0 {
            scale(-1.0, v);
        }
    }
}

fn orthogonalize(w: &mut [f64], against: &[Vec<f64>]) {
    // Classical Gram-Schmidt applied twice.
    for _ in 0..2 {
        for q in against {
            let c = dot(q, w);
            axpy(-c, q, w);
        }
    }
}

fn random_unit(
    n: usize,
    locked: &[Vec<f64>],
    basis: &[Vec<f64>],
    rng: &mut ChaCha8Rng,
) -> Option<Vec<f64>> {
    for _ in 0..8 {
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        orthogonalize(&mut v, locked);
        orthogonalize(&mut v, basis);
        let nv = norm(&v);
        if nv > 1e-8 {
            scale(1.0 / nv, &mut v);
            return Some(v);
        }
    }
    None
}

pub(crate) enum RunError {
    NotConverged { residuals: Vec<f64>, iterations: usize },
}

/// One deflated Lanczos run returning the `want` largest eigenpairs of the
/// operator restricted to the orthogonal complement of `locked`.
pub(crate) fn lanczos_run<A: SymmetricOperator + ?Sized>(
    op: &A,
    want: usize,
    locked: &[Vec<f64>],
    tol: f64,
    budget: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Pair>, usize), RunError> {
    let n = op.dim();
    let avail = n - locked.len();
    debug_assert!(want >= 1 && want <= avail);

    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut steps = 0usize;
    let mut anorm = 0.0f64;
    let mut next_check = avail.min(want + 8);
    let mut last_estimates = vec![f64::INFINITY; want];

    let Some(start) = random_unit(n, locked, &[], rng) else {
        return Err(RunError::NotConverged {
            residuals: last_estimates,
            iterations: 0,
        });
    };
    basis.push(start);
    let mut w = vec![0.0; n];

    loop {
        let j = basis.len() - 1;
        op.apply(&basis[j], &mut w);
        steps += 1;
        let a = dot(&basis[j], &w);
        axpy(-a, &basis[j], &mut w);
        if j > 0 {
            axpy(-beta[j - 1], &basis[j - 1], &mut w);
        }
        orthogonalize(&mut w, locked);
        orthogonalize(&mut w, &basis);
        alpha.push(a);
        let b = norm(&w);
        anorm = anorm.max(a.abs() + b);

        let m = basis.len();
        let exhausted = m == avail;
        let mut coupling = b;
        if !exhausted {
            if b <= 1e-12 * anorm.max(f64::MIN_POSITIVE) {
                // Invariant subspace found: continue from a fresh direction.
                coupling = 0.0;
                match random_unit(n, locked, &basis, rng) {
                    Some(v) => {
                        beta.push(0.0);
                        basis.push(v);
                    }
                    None => {
                        return Err(RunError::NotConverged {
                            residuals: last_estimates,
                            iterations: steps,
                        })
                    }
                }
            } else {
                beta.push(b);
                let mut v = w.clone();
                scale(1.0 / b, &mut v);
                basis.push(v);
            }
        } else {
            coupling = 0.0;
        }

        let out_of_budget = steps >= budget;
        if m >= next_check || exhausted || out_of_budget {
            let (vals, z) = tridiagonal_eigen(&alpha, &beta[..m - 1]);
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&x, &y| vals[y].total_cmp(&vals[x]));
            let top = &order[..want.min(m)];
            let estimates: Vec<f64> = top
                .iter()
                .map(|&k| (coupling * z[(m - 1) * m + k]).abs())
                .collect();
            let estimated_ok = top.len() == want
                && top
                    .iter()
                    .zip(&estimates)
                    .all(|(&k, &est)| est <= bound(tol, vals[k]));
            if estimated_ok || exhausted {
                let pairs: Vec<Pair> = top
                    .iter()
                    .map(|&k| {
                        let mut x = vec![0.0; n];
                        for (jj, q) in basis.iter().take(m).enumerate() {
                            axpy(z[jj * m + k], q, &mut x);
                        }
                        let nx = norm(&x);
                        scale(1.0 / nx, &mut x);
                        let value = vals[k];
                        let mut ax = vec![0.0; n];
                        op.apply(&x, &mut ax);
                        axpy(-value, &x, &mut ax);
                        Pair {
                            value,
                            vector: x,
                            residual: norm(&ax),
                        }
                    })
                    .collect();
                if pairs.iter().all(|p| p.residual <= bound(tol, p.value)) {
                    return Ok((pairs, steps));
                }
                last_estimates = pairs.iter().map(|p| p.residual).collect();
                if exhausted {
                    return Err(RunError::NotConverged {
                        residuals: last_estimates,
                        iterations: steps,
                    });
                }
            } else {
                last_estimates = estimates;
            }
            if out_of_budget {
                return Err(RunError::NotConverged {
                    residuals: last_estimates,
                    iterations: steps,
                });
            }
            next_check = avail.min((m + 1).max((m as f64 * 1.25).ceil() as usize));
        }
    }
}

/// The `d` algebraically largest eigenpairs of a symmetric operator.
///
/// Works for any symmetric operator; on positive semi-definite operators
/// these are the dominant eigenpairs. Repeated eigenvalues are resolved by
/// re-running the iteration deflated against the pairs found so far until a
/// run's leading Ritz value no longer exceeds the current `d`-th value.
pub fn top_eigenpairs<A: SymmetricOperator + ?Sized>(
    op: &A,
    d: usize,
    cfg: &EigConfig,
) -> Result<EigenBasis, SpectralError> {
    let n = op.dim();
    if d == 0 || d > n {
        return Err(SpectralError::Dimension { requested: d, dim: n });
    }
    let budget = cfg.budget(d);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut locked: Vec<Pair> = Vec::new();
    let mut used = 0usize;

    loop {
        let verifying = locked.len() >= d;
        let want = if verifying { 1 } else { d - locked.len() };
        let locked_vecs: Vec<Vec<f64>> = locked.iter().map(|p| p.vector.clone()).collect();
        let remaining = budget.saturating_sub(used).max(1);
        let (pairs, steps) = lanczos_run(op, want, &locked_vecs, cfg.tol, remaining, &mut rng)
            .map_err(|RunError::NotConverged { residuals, iterations }| {
                SpectralError::NotConverged {
                    residuals,
                    iterations: used + iterations,
                }
            })?;
        used += steps;
        if verifying {
            let threshold = locked[d - 1].value;
            if pairs[0].value <= threshold + bound(cfg.tol, threshold) {
                break;
            }
        }
        locked.extend(pairs);
        locked.sort_by(|a, b| b.value.total_cmp(&a.value));
        if locked.len() == n {
            break;
        }
        if used >= budget {
            // Out of budget before the verification run could confirm that
            // no repeated eigenvalue was missed.
            return Err(SpectralError::NotConverged {
                residuals: locked.iter().map(|p| p.residual).collect(),
                iterations: used,
            });
        }
    }

    locked.truncate(d);
    let mut basis = EigenBasis {
        values: Vec::with_capacity(d),
        vectors: Vec::with_capacity(d),
        residuals: Vec::with_capacity(d),
    };
    for mut p in locked {
        canonical_sign(&mut p.vector);
        basis.values.push(p.value);
        basis.vectors.push(p.vector);
        basis.residuals.push(p.residual);
    }
    Ok(basis)
}
