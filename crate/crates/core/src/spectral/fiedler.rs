use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lanczos::{canonical_sign, lanczos_run, EigConfig, RunError};
use super::SpectralError;
use crate::data::{GramOperator, NormalizedView};
use crate::linalg::{norm, scale, SymmetricOperator};

/// How a node was bipartitioned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMethod {
    /// Sign pattern of the Fiedler vector.
    Fiedler,
    /// Fiedler signs left one side empty; split at the median coordinate.
    Median,
    /// The subgraph is disconnected: the largest component is cut off.
    Components,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiedlerSplit {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    /// Fiedler coordinate of each input item, in input order.
    pub coords: Vec<f64>,
    pub method: SplitMethod,
}

/// Normalised adjacency `D^-1/2 (G − diag G) D^-1/2` of a restricted Gram.
struct NormalizedAdjacency<'a> {
    gram: &'a GramOperator,
    diag: Vec<f64>,
    inv_sqrt_deg: Vec<f64>,
}

impl SymmetricOperator for NormalizedAdjacency<'_> {
    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let y: Vec<f64> = x.iter().zip(&self.inv_sqrt_deg).map(|(a, b)| a * b).collect();
        self.gram.apply(&y, out);
        for k in 0..out.len() {
            out[k] = self.inv_sqrt_deg[k] * (out[k] - self.diag[k] * y[k]);
        }
    }
}

/// Connected components of the item co-occurrence graph restricted to the
/// operator's items, as lists of local indices.
fn components(gram: &GramOperator) -> Vec<Vec<usize>> {
    let n = gram.dim();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    // First local item seen for each user; later items of the user join it.
    let mut anchor = vec![usize::MAX; gram.n_local_users()];
    for a in 0..n {
        for &u in gram.column(a).0 {
            let slot = &mut anchor[u as usize];
            if *slot == usize::MAX {
                *slot = a;
            } else {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, *slot));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot_of_root = vec![usize::MAX; n];
    for a in 0..n {
        let r = find(&mut parent, a);
        if slot_of_root[r] == usize::MAX {
            slot_of_root[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot_of_root[r]].push(a);
    }
    groups
}

/// Bipartitions `items` using the co-occurrence graph of `view`.
///
/// The graph is the restricted Gram with its diagonal removed. For a
/// connected graph the Fiedler vector (second eigenvector of the normalised
/// adjacency) is split by sign, positive coordinates going left and zero
/// coordinates to the smaller side. Disconnected graphs are split by
/// components instead.
pub fn fiedler_split(
    view: &NormalizedView<'_>,
    items: &[usize],
    cfg: &EigConfig,
) -> Result<FiedlerSplit, SpectralError> {
    let n = items.len();
    if n < 2 {
        return Err(SpectralError::TooSmall(n));
    }
    let gram = view.gram_restricted(items);
    let diag = gram.diagonal();
    let ones = vec![1.0; n];
    let mut g1 = vec![0.0; n];
    gram.apply(&ones, &mut g1);
    let degree: Vec<f64> = g1.iter().zip(&diag).map(|(s, d)| (s - d).max(0.0)).collect();

    let comps = components(&gram);
    if comps.len() > 1 {
        return Ok(component_split(items, &comps, &degree));
    }

    let sqrt_deg: Vec<f64> = degree.iter().map(|d| d.sqrt()).collect();
    let op = NormalizedAdjacency {
        gram: &gram,
        diag,
        inv_sqrt_deg: sqrt_deg.iter().map(|s| 1.0 / s).collect(),
    };
    // D^1/2·1 spans the top eigenspace of a connected normalised adjacency.
    let mut top = sqrt_deg;
    let nt = norm(&top);
    scale(1.0 / nt, &mut top);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let budget = cfg.budget(2).max(n);
    let (pairs, _) = lanczos_run(&op, 1, &[top], cfg.tol, budget, &mut rng).map_err(
        |RunError::NotConverged { residuals, iterations }| SpectralError::NotConverged {
            residuals,
            iterations,
        },
    )?;
    let mut coords = pairs.into_iter().next().expect("one pair requested").vector;
    canonical_sign(&mut coords);

    let scale_ref = coords.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let eps = 1e-12 * scale_ref;
    let n_pos = coords.iter().filter(|&&c| c > eps).count();
    let n_neg = coords.iter().filter(|&&c| c < -eps).count();
    let zeros_left = n_pos <= n_neg;
    let mut left = Vec::new();
    let mut right = Vec::new();
    for (k, &c) in coords.iter().enumerate() {
        let goes_left = if c > eps {
            true
        } else if c < -eps {
            false
        } else {
            zeros_left
        };
        if goes_left {
            left.push(items[k]);
        } else {
            right.push(items[k]);
        }
    }
    if !left.is_empty() && !right.is_empty() {
        return Ok(FiedlerSplit {
            left,
            right,
            coords,
            method: SplitMethod::Fiedler,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| coords[a].total_cmp(&coords[b]).then(items[a].cmp(&items[b])));
    let half = n / 2;
    let mut right: Vec<usize> = order[..half].iter().map(|&k| items[k]).collect();
    let mut left: Vec<usize> = order[half..].iter().map(|&k| items[k]).collect();
    left.sort_unstable();
    right.sort_unstable();
    Ok(FiedlerSplit {
        left,
        right,
        coords,
        method: SplitMethod::Median,
    })
}

fn component_split(items: &[usize], comps: &[Vec<usize>], degree: &[f64]) -> FiedlerSplit {
    let n = items.len();
    let mut is_left = vec![false; n];
    // Components are listed by their smallest local index, so the stable
    // sort breaks size ties towards the earliest component.
    let largest = comps
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| a.len().cmp(&b.len()).then(ib.cmp(ia)))
        .map(|(i, _)| i)
        .expect("at least two components");
    if comps[largest].len() == 1 {
        // No edges at all: halve by position.
        for flag in is_left.iter_mut().take(n / 2) {
            *flag = true;
        }
    } else {
        for &a in &comps[largest] {
            is_left[a] = true;
        }
    }
    // Indicator vector orthogonal to D^1/2·1 (sizes when volumes vanish).
    let weight = |a: usize| if degree[a] > 0.0 { degree[a] } else { 0.0 };
    let vol = |side: bool| -> f64 { (0..n).filter(|&a| is_left[a] == side).map(weight).sum() };
    let (vol_l, vol_r) = (vol(true), vol(false));
    let mut coords: Vec<f64> = if vol_l > 0.0 && vol_r > 0.0 {
        (0..n)
            .map(|a| {
                let s = degree[a].sqrt();
                if is_left[a] {
                    s / vol_l
                } else {
                    -s / vol_r
                }
            })
            .collect()
    } else {
        let n_l = is_left.iter().filter(|&&f| f).count() as f64;
        let n_r = n as f64 - n_l;
        (0..n)
            .map(|a| if is_left[a] { 1.0 / n_l } else { -1.0 / n_r })
            .collect()
    };
    let nc = norm(&coords);
    if nc > 0.0 {
        scale(1.0 / nc, &mut coords);
    }
    let left = (0..n).filter(|&a| is_left[a]).map(|a| items[a]).collect();
    let right = (0..n).filter(|&a| !is_left[a]).map(|a| items[a]).collect();
    FiedlerSplit {
        left,
        right,
        coords,
        method: SplitMethod::Components,
    }
}
