#![allow(dead_code)]

use nalgebra::DMatrix;
use partsim::InteractionMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Bernoulli(p) interactions; every user and item keeps at least one entry.
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

/// Dense `RᵀR` by triple loop.
pub fn naive_gram(m: &InteractionMatrix) -> Vec<Vec<f64>> {
    let d = m.to_dense();
    let n = m.n_items();
    let mut g = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            for u in 0..m.n_users() {
                g[i][j] += d[(u, i)] * d[(u, j)];
            }
        }
    }
    g
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Recall and nDCG of one ranked list, written from the definitions.
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

/// `Γ(n/2)` for positive integers `n`.
fn gamma_half(n: usize) -> f64 {
    let (mut g, mut x) = if n % 2 == 0 { (1.0, 1.0) } else { (std::f64::consts::PI.sqrt(), 0.5) };
    while x < n as f64 / 2.0 - 1e-12 {
        g *= x;
        x += 1.0;
    }
    g
}

fn t_pdf(t: f64, df: usize) -> f64 {
    let v = df as f64;
    gamma_half(df + 1) / ((v * std::f64::consts::PI).sqrt() * gamma_half(df)) * (1.0 + t * t / v).powf(-(v + 1.0) / 2.0)
}

/// Two-sided p-value from Simpson quadrature of the Student t density.
pub fn t_test_oracle(a: &[f64], b: &[f64]) -> (f64, f64) {
    let n = a.len() as f64;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n;
    let sd = (d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt();
    let t = mean / (sd / n.sqrt());
    let df = a.len() - 1;
    let steps = 200_000;
    let h = t.abs() / steps as f64;
    let mut s = t_pdf(0.0, df) + t_pdf(t.abs(), df);
    for k in 1..steps {
        s += if k % 2 == 1 { 4.0 } else { 2.0 } * t_pdf(k as f64 * h, df);
    }
    let central = s * h / 3.0;
    (t, 1.0 - 2.0 * central)
}
