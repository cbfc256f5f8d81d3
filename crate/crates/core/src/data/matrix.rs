use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::DataError;

/// Bidirectional map between external string ids and dense indices.
///
/// Indices are assigned in insertion order.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct IdMap {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Ids `"0"`, `"1"`, ... for generated data.
    pub fn numbered(n: usize) -> Self {
        (0..n).map(|i| i.to_string()).collect::<Vec<_>>().into()
    }

    /// Returns the index of `id`, inserting it if unseen.
    pub fn intern(&mut self, id: &str) -> usize {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.ids.len();
        self.ids.push(id.to_owned());
        self.index.insert(id.to_owned(), i);
        i
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn id(&self, index: usize) -> &str {
        &self.ids[index]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

impl PartialEq for IdMap {
    fn eq(&self, other: &Self) -> bool {
        self.ids == other.ids
    }
}

impl From<Vec<String>> for IdMap {
    fn from(ids: Vec<String>) -> Self {
        let index = ids.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Self { ids, index }
    }
}

impl From<IdMap> for Vec<String> {
    fn from(map: IdMap) -> Self {
        map.ids
    }
}

/// Sparse binary user x item matrix with both row- and column-major indexes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr", into = "MatrixRepr")]
pub struct InteractionMatrix {
    users: IdMap,
    items: IdMap,
    row_ptr: Vec<usize>,
    row_items: Vec<u32>,
    col_ptr: Vec<usize>,
    col_users: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    users: IdMap,
    items: IdMap,
    entries: Vec<(u32, u32)>,
}

impl TryFrom<MatrixRepr> for InteractionMatrix {
    type Error = DataError;

    fn try_from(repr: MatrixRepr) -> Result<Self, DataError> {
        let pairs = repr.entries.into_iter().map(|(u, i)| (u as usize, i as usize));
        InteractionMatrix::from_pairs(repr.users, repr.items, pairs)
    }
}

impl From<InteractionMatrix> for MatrixRepr {
    fn from(m: InteractionMatrix) -> Self {
        let entries = m.entries().map(|(u, i)| (u as u32, i as u32)).collect();
        MatrixRepr {
            users: m.users,
            items: m.items,
            entries,
        }
    }
}

impl InteractionMatrix {
    /// Builds a matrix over the given id spaces. Duplicate pairs collapse.
    pub fn from_pairs(
        users: IdMap,
        items: IdMap,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, DataError> {
        let (n_users, n_items) = (users.len(), items.len());
        let mut entries: Vec<(u32, u32)> = Vec::new();
        for (u, i) in pairs {
            if u >= n_users || i >= n_items {
                return Err(DataError::OutOfBounds {
                    user: u,
                    item: i,
                    n_users,
                    n_items,
                });
            }
            entries.push((u as u32, i as u32));
        }
        entries.sort_unstable();
        entries.dedup();

        let mut row_ptr = vec![0usize; n_users + 1];
        let mut col_ptr = vec![0usize; n_items + 1];
        for &(u, i) in &entries {
            row_ptr[u as usize + 1] += 1;
            col_ptr[i as usize + 1] += 1;
        }
        for k in 0..n_users {
            row_ptr[k + 1] += row_ptr[k];
        }
        for k in 0..n_items {
            col_ptr[k + 1] += col_ptr[k];
        }
        let row_items = entries.iter().map(|&(_, i)| i).collect();
        // Entries are sorted by user, so each column receives users in order.
        let mut col_users = vec![0u32; entries.len()];
        let mut fill = col_ptr.clone();
        for &(u, i) in &entries {
            col_users[fill[i as usize]] = u;
            fill[i as usize] += 1;
        }
        Ok(Self {
            users,
            items,
            row_ptr,
            row_items,
            col_ptr,
            col_users,
        })
    }

    /// Matrix with numbered ids, convenient for generated data and tests.
    pub fn from_indices(
        n_users: usize,
        n_items: usize,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, DataError> {
        Self::from_pairs(IdMap::numbered(n_users), IdMap::numbered(n_items), pairs)
    }

    /// Dense 0/1 rows, for tests on small toys.
    pub fn from_dense(rows: &[Vec<u8>]) -> Self {
        let n_items = rows.first().map_or(0, Vec::len);
        let pairs = rows.iter().enumerate().flat_map(|(u, row)| {
            row.iter()
                .enumerate()
                .filter(|(_, &v)| v != 0)
                .map(move |(i, _)| (u, i))
        });
        Self::from_indices(rows.len(), n_items, pairs).expect("dense rows are in bounds")
    }

    /// Same id spaces, different entries.
    pub fn with_entries(
        &self,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, DataError> {
        Self::from_pairs(self.users.clone(), self.items.clone(), pairs)
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn nnz(&self) -> usize {
        self.row_items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.row_items.is_empty()
    }

    pub fn users(&self) -> &IdMap {
        &self.users
    }

    pub fn items(&self) -> &IdMap {
        &self.items
    }

    /// Items of user `u`, ascending.
    pub fn row(&self, u: usize) -> &[u32] {
        &self.row_items[self.row_ptr[u]..self.row_ptr[u + 1]]
    }

    /// Users of item `i`, ascending.
    pub fn col(&self, i: usize) -> &[u32] {
        &self.col_users[self.col_ptr[i]..self.col_ptr[i + 1]]
    }

    pub fn user_degree(&self, u: usize) -> usize {
        self.row_ptr[u + 1] - self.row_ptr[u]
    }

    pub fn item_degree(&self, i: usize) -> usize {
        self.col_ptr[i + 1] - self.col_ptr[i]
    }

    pub fn user_degrees(&self) -> Vec<usize> {
        (0..self.n_users()).map(|u| self.user_degree(u)).collect()
    }

    pub fn item_degrees(&self) -> Vec<usize> {
        (0..self.n_items()).map(|i| self.item_degree(i)).collect()
    }

    pub fn contains(&self, u: usize, i: usize) -> bool {
        self.row(u).binary_search(&(i as u32)).is_ok()
    }

    /// All `(user, item)` pairs in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n_users()).flat_map(move |u| self.row(u).iter().map(move |&i| (u, i as usize)))
    }

    /// Same entries read from the column-major index, sorted row-major.
    pub fn entries_by_column(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = (0..self.n_items())
            .flat_map(|i| self.col(i).iter().map(move |&u| (u as usize, i)))
            .collect();
        out.sort_unstable();
        out
    }

    /// Dense binary matrix. Only meant for small inputs.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_users(), self.n_items());
        for (u, i) in self.entries() {
            m[(u, i)] = 1.0;
        }
        m
    }

    /// Dense item co-occurrence matrix `RᵀR` restricted to `items`, in the
    /// given order.
    pub fn gram_dense(&self, items: &[usize]) -> DMatrix<f64> {
        let m = items.len();
        let local = self.local_index(items);
        let mut g = DMatrix::<f64>::zeros(m, m);
        let mut seen = vec![false; self.n_users()];
        let mut touched: Vec<usize> = Vec::new();
        for &i in items {
            for &u in self.col(i) {
                if !seen[u as usize] {
                    seen[u as usize] = true;
                    touched.push(u as usize);
                }
            }
        }
        let mut buf: Vec<usize> = Vec::new();
        for &u in &touched {
            buf.clear();
            buf.extend(
                self.row(u)
                    .iter()
                    .filter_map(|&i| local.get(&(i as usize)).copied()),
            );
            for &a in &buf {
                for &b in &buf {
                    g[(a, b)] += 1.0;
                }
            }
        }
        g
    }

    fn local_index(&self, items: &[usize]) -> HashMap<usize, usize> {
        items.iter().enumerate().map(|(k, &i)| (i, k)).collect()
    }

    /// Iteratively drops users with fewer than `min_user` and items with
    /// fewer than `min_item` interactions, then re-indexes densely while
    /// keeping the external ids.
    pub fn k_core(&self, min_user: usize, min_item: usize) -> Result<Self, DataError> {
        let mut alive_u = vec![true; self.n_users()];
        let mut alive_i = vec![true; self.n_items()];
        loop {
            let mut changed = false;
            let mut udeg = vec![0usize; self.n_users()];
            let mut ideg = vec![0usize; self.n_items()];
            for (u, i) in self.entries() {
                if alive_u[u] && alive_i[i] {
                    udeg[u] += 1;
                    ideg[i] += 1;
                }
            }
            for u in 0..self.n_users() {
                if alive_u[u] && udeg[u] < min_user {
                    alive_u[u] = false;
                    changed = true;
                }
            }
            for i in 0..self.n_items() {
                if alive_i[i] && ideg[i] < min_item {
                    alive_i[i] = false;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let mut users = IdMap::new();
        let mut items = IdMap::new();
        let mut pairs = Vec::new();
        for (u, i) in self.entries() {
            if alive_u[u] && alive_i[i] {
                pairs.push((users.intern(self.users.id(u)), items.intern(self.items.id(i))));
            }
        }
        if pairs.is_empty() {
            return Err(DataError::Empty);
        }
        Self::from_pairs(users, items, pairs)
    }
}
