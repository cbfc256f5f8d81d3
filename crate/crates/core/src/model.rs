//! Fitted models, user scoring, and the binary model container.
//!
//! Container layout (all integers and floats little-endian):
//!
//! ```text
//! magic          8 bytes  "PSIMMDL1"
//! header_len     u32
//! header         header_len bytes of UTF-8 JSON (ModelHeader)
//! nnz            u64
//! triples        nnz x (row u32, col u32, value f64), row-major order
//! rank           u32      (0 when there is no global factor)
//! lambda         f64      (present only when rank > 0)
//! weights        rank x f64
//! vectors        rank x n_items x f64, one eigenvector after another
//! has_scaling    u8       (1 when input item weights follow)
//! item_weights   n_items x f64
//! has_counts     u8       (1 for popularity models)
//! counts         n_items x f64
//! ```

use std::collections::BTreeMap;
use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::InteractionMatrix;

const MAGIC: &[u8; 8] = b"PSIMMDL1";

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a model container")]
    BadMagic,
    #[error("bad model header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("corrupt model container: {0}")]
    Corrupt(String),
}

/// Sparse item x item matrix in compressed rows with an empty diagonal.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseSim {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl SparseSim {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            row_ptr: vec![0; n + 1],
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    /// Builds from per-row entry lists. Diagonal entries and exact zeros are
    /// dropped; columns are sorted. Duplicate columns within a row are summed.
    pub fn from_rows(n: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        assert_eq!(rows.len(), n, "one entry list per item");
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for (i, mut row) in rows.into_iter().enumerate() {
            row.retain(|&(j, v)| j != i && v != 0.0);
            row.sort_by_key(|&(j, _)| j);
            let mut last: Option<usize> = None;
            for (j, v) in row {
                assert!(j < n, "column {j} outside {n} items");
                if last == Some(j) {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(j as u32);
                    vals.push(v);
                    last = Some(j);
                }
            }
            row_ptr.push(cols.len());
        }
        Self {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn from_triples(n: usize, triples: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut rows = vec![Vec::new(); n];
        for (i, j, v) in triples {
            rows[i].push((j, v));
        }
        Self::from_rows(n, rows)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&(j as u32)).map_or(0.0, |k| vals[k])
    }

    pub fn triples(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j as usize, v))
        })
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n, self.n);
        for (i, j, v) in self.triples() {
            m[(i, j)] = v;
        }
        m
    }

    pub fn diagonal_is_zero(&self) -> bool {
        self.triples().all(|(i, j, _)| i != j)
    }
}

/// Low-rank term `lambda · V diag(weights) Vᵀ`, stored factored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalFactor {
    pub vectors: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub lambda: f64,
}

impl GlobalFactor {
    pub fn rank(&self) -> usize {
        self.vectors.len()
    }
}

/// Degree weighting applied to a user's history before scoring:
/// `r̃_ui = deg(u)^-user_exponent · item_weights[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputScaling {
    pub user_exponent: f64,
    pub item_weights: Vec<f64>,
}

/// Partition structure carried by partition-aware models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionMeta {
    pub tau: f64,
    pub k: usize,
    pub sizes: Vec<usize>,
    pub assignment: Vec<usize>,
    pub cold: Vec<usize>,
    pub hub_strategy: String,
    pub hub_items: Vec<usize>,
}

pub type Params = BTreeMap<String, serde_json::Value>;

/// Item-item model scoring a user as `r_u·S + lambda·(r_u V) diag(w) Vᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityModel {
    pub name: String,
    pub params: Params,
    pub sparse: SparseSim,
    pub global: Option<GlobalFactor>,
    pub scaling: Option<InputScaling>,
    pub partition: Option<PartitionMeta>,
}

impl SimilarityModel {
    pub fn new(name: &str, params: Params, sparse: SparseSim) -> Self {
        Self {
            name: name.to_owned(),
            params,
            sparse,
            global: None,
            scaling: None,
            partition: None,
        }
    }

    pub fn n_items(&self) -> usize {
        self.sparse.n()
    }

    /// Materialises `C = S + lambda·V diag(w) Vᵀ`. Small catalogs only.
    pub fn dense_similarity(&self) -> nalgebra::DMatrix<f64> {
        let mut c = self.sparse.to_dense();
        if let Some(g) = &self.global {
            for (v, &w) in g.vectors.iter().zip(&g.weights) {
                let v = nalgebra::DVector::from_column_slice(v);
                c += (&v * v.transpose()) * (g.lambda * w);
            }
        }
        c
    }

    /// Input weights of a history, before multiplying by `C`.
    pub fn input_weights(&self, history: &[u32]) -> Vec<f64> {
        match &self.scaling {
            None => vec![1.0; history.len()],
            Some(s) => {
                let uw = if history.is_empty() {
                    0.0
                } else {
                    (history.len() as f64).powf(-s.user_exponent)
                };
                history.iter().map(|&i| uw * s.item_weights[i as usize]).collect()
            }
        }
    }
}

/// Non-similarity reference scorers.
#[derive(Debug, Clone, PartialEq)]
pub enum ScorerModel {
    /// Scores every item by its training degree.
    MostPop { counts: Vec<f64> },
    /// Seeded uniform scores per `(user, item)`.
    Random { seed: u64, n_items: usize },
}

pub fn popularity_scores(train: &InteractionMatrix) -> ScorerModel {
    ScorerModel::MostPop {
        counts: train.item_degrees().into_iter().map(|c| c as f64).collect(),
    }
}

pub fn random_scores(seed: u64, n_items: usize) -> ScorerModel {
    ScorerModel::Random { seed, n_items }
}

/// Anything that scores the full catalog for a user.
pub trait Recommender: Sync {
    fn n_items(&self) -> usize;

    /// Writes one score per item into `out` for a user with training
    /// `history` (ascending item indices).
    fn score_into(&self, user: usize, history: &[u32], out: &mut [f64]);
}

impl Recommender for SimilarityModel {
    fn n_items(&self) -> usize {
        self.sparse.n()
    }

    fn score_into(&self, _user: usize, history: &[u32], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let weights = self.input_weights(history);
        for (&i, &w) in history.iter().zip(&weights) {
            let (cols, vals) = self.sparse.row(i as usize);
            for (&j, &s) in cols.iter().zip(vals) {
                out[j as usize] += w * s;
            }
        }
        if let Some(g) = &self.global {
            for (v, &vw) in g.vectors.iter().zip(&g.weights) {
                let z: f64 = history.iter().zip(&weights).map(|(&i, &w)| w * v[i as usize]).sum();
                let c = g.lambda * vw * z;
                if c != 0.0 {
                    crate::linalg::axpy(c, v, out);
                }
            }
        }
    }
}

impl Recommender for ScorerModel {
    fn n_items(&self) -> usize {
        match self {
            ScorerModel::MostPop { counts } => counts.len(),
            ScorerModel::Random { n_items, .. } => *n_items,
        }
    }

    fn score_into(&self, user: usize, _history: &[u32], out: &mut [f64]) {
        match self {
            ScorerModel::MostPop { counts } => out.copy_from_slice(counts),
            ScorerModel::Random { seed, .. } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                rng.set_stream(user as u64);
                out.iter_mut().for_each(|v| *v = rng.gen::<f64>());
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Similarity(SimilarityModel),
    Scorer { name: String, scorer: ScorerModel },
}

impl Model {
    pub fn name(&self) -> &str {
        match self {
            Model::Similarity(m) => &m.name,
            Model::Scorer { name, .. } => name,
        }
    }

    pub fn as_similarity(&self) -> Option<&SimilarityModel> {
        match self {
            Model::Similarity(m) => Some(m),
            Model::Scorer { .. } => None,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to memory");
        buf
    }

    /// Hex SHA-256 of the serialised container.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<(), ModelError> {
        let header = ModelHeader::of(self);
        let json = serde_json::to_vec(&header)?;
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(json.len() as u32)?;
        w.write_all(&json)?;
        let empty = SparseSim::empty(header.n_items);
        let (sparse, global, scaling, counts) = match self {
            Model::Similarity(m) => (&m.sparse, m.global.as_ref(), m.scaling.as_ref(), None),
            Model::Scorer { scorer, .. } => match scorer {
                ScorerModel::MostPop { counts } => (&empty, None, None, Some(counts)),
                ScorerModel::Random { .. } => (&empty, None, None, None),
            },
        };
        w.write_u64::<LittleEndian>(sparse.nnz() as u64)?;
        for (i, j, v) in sparse.triples() {
            w.write_u32::<LittleEndian>(i as u32)?;
            w.write_u32::<LittleEndian>(j as u32)?;
            w.write_f64::<LittleEndian>(v)?;
        }
        match global {
            None => w.write_u32::<LittleEndian>(0)?,
            Some(g) => {
                w.write_u32::<LittleEndian>(g.rank() as u32)?;
                w.write_f64::<LittleEndian>(g.lambda)?;
                for &x in &g.weights {
                    w.write_f64::<LittleEndian>(x)?;
                }
                for v in &g.vectors {
                    for &x in v {
                        w.write_f64::<LittleEndian>(x)?;
                    }
                }
            }
        }
        let mut write_opt = |values: Option<&Vec<f64>>| -> Result<(), ModelError> {
            match values {
                None => w.write_u8(0)?,
                Some(vs) => {
                    w.write_u8(1)?;
                    for &x in vs {
                        w.write_f64::<LittleEndian>(x)?;
                    }
                }
            }
            Ok(())
        };
        write_opt(scaling.map(|s| &s.item_weights))?;
        write_opt(counts)?;
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self, ModelError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(ModelError::BadMagic);
        }
        let len = r.read_u32::<LittleEndian>()? as usize;
        let mut json = vec![0u8; len];
        r.read_exact(&mut json)?;
        let header: ModelHeader = serde_json::from_slice(&json)?;
        let n = header.n_items;
        let read_vec = |r: &mut R, len: usize| -> Result<Vec<f64>, ModelError> {
            (0..len)
                .map(|_| r.read_f64::<LittleEndian>().map_err(ModelError::from))
                .collect()
        };

        let nnz = r.read_u64::<LittleEndian>()? as usize;
        let mut triples = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            let i = r.read_u32::<LittleEndian>()? as usize;
            let j = r.read_u32::<LittleEndian>()? as usize;
            let v = r.read_f64::<LittleEndian>()?;
            if i >= n || j >= n || i == j {
                return Err(ModelError::Corrupt(format!("entry ({i}, {j})")));
            }
            triples.push((i, j, v));
        }
        let sparse = SparseSim::from_triples(n, triples);
        let rank = r.read_u32::<LittleEndian>()? as usize;
        let global = if rank == 0 {
            None
        } else {
            let lambda = r.read_f64::<LittleEndian>()?;
            let weights = read_vec(&mut r, rank)?;
            let vectors = (0..rank)
                .map(|_| read_vec(&mut r, n))
                .collect::<Result<Vec<_>, _>>()?;
            Some(GlobalFactor {
                vectors,
                weights,
                lambda,
            })
        };
        let scaling = match r.read_u8()? {
            0 => None,
            _ => Some(InputScaling {
                user_exponent: header.user_exponent.unwrap_or(0.0),
                item_weights: read_vec(&mut r, n)?,
            }),
        };
        let counts = match r.read_u8()? {
            0 => None,
            _ => Some(read_vec(&mut r, n)?),
        };
        match header.kind.as_str() {
            "similarity" => Ok(Model::Similarity(SimilarityModel {
                name: header.name,
                params: header.params,
                sparse,
                global,
                scaling,
                partition: header.partition,
            })),
            "mostpop" => Ok(Model::Scorer {
                name: header.name,
                scorer: ScorerModel::MostPop {
                    counts: counts.ok_or_else(|| ModelError::Corrupt("missing counts".into()))?,
                },
            }),
            "random" => Ok(Model::Scorer {
                name: header.name,
                scorer: ScorerModel::Random {
                    seed: header.seed.unwrap_or(0),
                    n_items: n,
                },
            }),
            other => Err(ModelError::Corrupt(format!("unknown kind {other:?}"))),
        }
    }
}

impl Recommender for Model {
    fn n_items(&self) -> usize {
        match self {
            Model::Similarity(m) => m.n_items(),
            Model::Scorer { scorer, .. } => scorer.n_items(),
        }
    }

    fn score_into(&self, user: usize, history: &[u32], out: &mut [f64]) {
        match self {
            Model::Similarity(m) => m.score_into(user, history, out),
            Model::Scorer { scorer, .. } => scorer.score_into(user, history, out),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelHeader {
    kind: String,
    name: String,
    n_items: usize,
    params: Params,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    user_exponent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    partition: Option<PartitionMeta>,
}

impl ModelHeader {
    fn of(model: &Model) -> Self {
        match model {
            Model::Similarity(m) => ModelHeader {
                kind: "similarity".into(),
                name: m.name.clone(),
                n_items: m.n_items(),
                params: m.params.clone(),
                user_exponent: m.scaling.as_ref().map(|s| s.user_exponent),
                seed: None,
                partition: m.partition.clone(),
            },
            Model::Scorer { name, scorer } => {
                let (kind, seed) = match scorer {
                    ScorerModel::MostPop { .. } => ("mostpop", None),
                    ScorerModel::Random { seed, .. } => ("random", Some(*seed)),
                };
                ModelHeader {
                    kind: kind.into(),
                    name: name.clone(),
                    n_items: scorer.n_items(),
                    params: Params::new(),
                    user_exponent: None,
                    seed,
                    partition: None,
                }
            }
        }
    }
}
