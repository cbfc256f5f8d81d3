//! Independent reference computations. Nothing here calls the code under
//! test.

use partsim::InteractionMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random binary matrix in which every user and item has an interaction.
pub fn random_matrix(r: &mut ChaCha8Rng, users: usize, items: usize, p: f64) -> InteractionMatrix {
    let mut pairs = Vec::new();
    for u in 0..users {
        for i in 0..items {
            if r.gen::<f64>() < p {
                pairs.push((u, i));
            }
        }
        pairs.push((u, r.gen_range(0..items)));
    }
    for i in 0..items {
        pairs.push((r.gen_range(0..users), i));
    }
    InteractionMatrix::from_indices(users, items, pairs).unwrap()
}

/// Dense `RᵀR` by triple loop over a 0/1 table.
pub fn naive_gram(m: &InteractionMatrix) -> Vec<Vec<f64>> {
    let n = m.n_items();
    let mut g = vec![vec![0.0; n]; n];
    for u in 0..m.n_users() {
        for i in 0..n {
            for j in 0..n {
                if m.contains(u, i) && m.contains(u, j) {
                    g[i][j] += 1.0;
                }
            }
        }
    }
    g
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn gauss_jordan_inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for c in 0..n {
        let p = (c..n).max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs())).unwrap();
        m.swap(c, p);
        let piv = m[c][c];
        for v in m[c].iter_mut() {
            *v /= piv;
        }
        for r in 0..n {
            if r != c {
                let f = m[r][c];
                if f != 0.0 {
                    for k in 0..2 * n {
                        m[r][k] -= f * m[c][k];
                    }
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// Recall@k (denominator |truth|) and nDCG@k for one ranked list.
pub fn brute_force_metrics(list: &[usize], truth: &[usize], k: usize) -> (f64, f64) {
    let mut hits = 0.0;
    let mut dcg = 0.0;
    for pos in 0..k.min(list.len()) {
        if truth.contains(&list[pos]) {
            hits += 1.0;
            dcg += 1.0 / ((pos as f64) + 2.0).log2();
        }
    }
    let mut idcg = 0.0;
    for pos in 0..k.min(truth.len()) {
        idcg += 1.0 / ((pos as f64) + 2.0).log2();
    }
    (hits / truth.len() as f64, dcg / idcg)
}

/// Gini as mean absolute difference over all ordered pairs,
/// `Σ_i Σ_j |x_i − x_j| / (2 n Σx)`, in exact integer arithmetic up to the
/// final division.
pub fn gini_pairwise(counts: &[usize]) -> f64 {
    let n = counts.len() as i128;
    let total: i128 = counts.iter().map(|&c| c as i128).sum();
    if n == 0 || total == 0 {
        return 0.0;
    }
    let mut diff: i128 = 0;
    for &a in counts {
        for &b in counts {
            diff += (a as i128 - b as i128).abs();
        }
    }
    diff as f64 / (2 * n * total) as f64
}

/// Head items by a full sort: training count descending, index ascending.
pub fn head_by_sort(train: &InteractionMatrix, fraction: f64) -> Vec<bool> {
    let n = train.n_items();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| train.item_degree(b).cmp(&train.item_degree(a)).then(a.cmp(&b)));
    let size = (fraction * n as f64).ceil() as usize;
    let mut head = vec![false; n];
    for &i in &order[..size] {
        head[i] = true;
    }
    head
}
