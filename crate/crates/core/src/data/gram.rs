use crate::linalg::SymmetricOperator;

use super::matrix::InteractionMatrix;
use super::DataError;

/// Degree-weighted view of an interaction matrix: entry `(u, i)` is
/// `deg(u)^-a · deg(i)^-b`, and zero-degree rows or columns weigh 0.
#[derive(Debug, Clone)]
pub struct NormalizedView<'a> {
    base: &'a InteractionMatrix,
    user_exponent: f64,
    item_exponent: f64,
    user_weight: Vec<f64>,
    item_weight: Vec<f64>,
}

fn degree_weight(deg: usize, exponent: f64) -> f64 {
    if deg == 0 {
        0.0
    } else {
        (deg as f64).powf(-exponent)
    }
}

impl<'a> NormalizedView<'a> {
    pub fn new(base: &'a InteractionMatrix, a: f64, b: f64) -> Self {
        assert!(a >= 0.0 && b >= 0.0, "normalisation exponents must be non-negative");
        let user_weight = (0..base.n_users())
            .map(|u| degree_weight(base.user_degree(u), a))
            .collect();
        let item_weight = (0..base.n_items())
            .map(|i| degree_weight(base.item_degree(i), b))
            .collect();
        Self {
            base,
            user_exponent: a,
            item_exponent: b,
            user_weight,
            item_weight,
        }
    }

    pub fn base(&self) -> &'a InteractionMatrix {
        self.base
    }

    pub fn exponents(&self) -> (f64, f64) {
        (self.user_exponent, self.item_exponent)
    }

    pub fn user_weight(&self, u: usize) -> f64 {
        self.user_weight[u]
    }

    pub fn item_weight(&self, i: usize) -> f64 {
        self.item_weight[i]
    }

    /// Weighted value of `(u, i)`, zero when the pair is absent.
    pub fn value(&self, u: usize, i: usize) -> f64 {
        if self.base.contains(u, i) {
            self.user_weight[u] * self.item_weight[i]
        } else {
            0.0
        }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.base.n_users(), self.base.n_items());
        for (u, i) in self.base.entries() {
            m[(u, i)] = self.user_weight[u] * self.item_weight[i];
        }
        m
    }

    /// Matrix-free `R̃ᵀR̃` over the whole catalog.
    pub fn gram(&self) -> GramOperator {
        let items: Vec<usize> = (0..self.base.n_items()).collect();
        GramOperator::build(self, &items)
    }

    /// Matrix-free `R̃_Aᵀ R̃_A` over the item subset `items`, whose order
    /// defines the local coordinates.
    pub fn gram_restricted(&self, items: &[usize]) -> GramOperator {
        GramOperator::build(self, items)
    }
}

/// Item Gram operator `x ↦ R̃ᵀ(R̃x)` restricted to a set of items.
///
/// Holds a compact copy of the restricted columns, so applying it costs two
/// passes over the restricted nonzeros and never forms the item x item
/// matrix.
#[derive(Debug, Clone)]
pub struct GramOperator {
    items: Vec<usize>,
    n_local_users: usize,
    col_ptr: Vec<usize>,
    col_users: Vec<u32>,
    col_vals: Vec<f64>,
}

impl GramOperator {
    fn build(view: &NormalizedView<'_>, items: &[usize]) -> Self {
        let base = view.base;
        let mut local_user = vec![u32::MAX; base.n_users()];
        let mut n_local_users = 0u32;
        let mut col_ptr = Vec::with_capacity(items.len() + 1);
        col_ptr.push(0);
        let mut col_users = Vec::new();
        let mut col_vals = Vec::new();
        for &i in items {
            let wi = view.item_weight[i];
            for &u in base.col(i) {
                let slot = &mut local_user[u as usize];
                if *slot == u32::MAX {
                    *slot = n_local_users;
                    n_local_users += 1;
                }
                col_users.push(*slot);
                col_vals.push(view.user_weight[u as usize] * wi);
            }
            col_ptr.push(col_users.len());
        }
        Self {
            items: items.to_vec(),
            n_local_users: n_local_users as usize,
            col_ptr,
            col_users,
            col_vals,
        }
    }

    /// Global item indices of the local coordinates.
    pub fn items(&self) -> &[usize] {
        &self.items
    }

    pub fn n_local_users(&self) -> usize {
        self.n_local_users
    }

    /// Local users and weights of local item `a`.
    pub fn column(&self, a: usize) -> (&[u32], &[f64]) {
        let r = self.col_ptr[a]..self.col_ptr[a + 1];
        (&self.col_users[r.clone()], &self.col_vals[r])
    }

    /// Diagonal of the Gram, `Σ_u R̃_ua²`.
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.items.len())
            .map(|a| self.column(a).1.iter().map(|v| v * v).sum())
            .collect()
    }

    pub fn apply_vec(&self, x: &[f64]) -> Result<Vec<f64>, DataError> {
        if x.len() != self.items.len() {
            return Err(DataError::Dimension {
                expected: self.items.len(),
                got: x.len(),
            });
        }
        let mut out = vec![0.0; x.len()];
        self.apply(x, &mut out);
        Ok(out)
    }

    /// `R̃_A x`, in local user coordinates.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut t = vec![0.0; self.n_local_users];
        for (a, &xa) in x.iter().enumerate() {
            if xa == 0.0 {
                continue;
            }
            let (users, vals) = self.column(a);
            for (&u, &v) in users.iter().zip(vals) {
                t[u as usize] += v * xa;
            }
        }
        t
    }
}

impl SymmetricOperator for GramOperator {
    fn dim(&self) -> usize {
        self.items.len()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let t = self.forward(x);
        for (a, o) in out.iter_mut().enumerate() {
            let (users, vals) = self.column(a);
            *o = users.iter().zip(vals).map(|(&u, &v)| v * t[u as usize]).sum();
        }
    }
}
