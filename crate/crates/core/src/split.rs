//! Seeded per-user hold-out splitting and head/tail item segmentation.
//!
//! Every user draws from its own ChaCha stream, keyed by `(seed, user)`, so
//! the split does not depend on the order users are processed in.

use std::fs;
use std::io::BufRead;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::{write_pairs, DataError, IdMap, InteractionMatrix};
use crate::linalg::{ceil_fraction, floor_fraction};

pub const TRAIN_FILE: &str = "train.tsv";
pub const VALID_FILE: &str = "valid.tsv";
pub const TEST_FILE: &str = "test.tsv";
pub const MANIFEST_FILE: &str = "split.manifest.json";

#[derive(Debug, Error)]
pub enum SplitError {
    #[error("invalid split configuration: {0}")]
    Config(String),
    #[error("interaction matrix is empty")]
    Empty,
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("{file} does not match the manifest digest")]
    DigestMismatch { file: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SplitError + '_ {
    move |source| SplitError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub seed: u64,
    pub test_fraction: f64,
    pub valid_fraction: f64,
    pub min_user_interactions: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            test_fraction: 0.15,
            valid_fraction: 0.15,
            min_user_interactions: 5,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<(), SplitError> {
        let open = |f: f64| f > 0.0 && f < 1.0;
        if !open(self.test_fraction) || !open(self.valid_fraction) {
            return Err(SplitError::Config(format!(
                "fractions must lie in (0, 1), got test {} valid {}",
                self.test_fraction, self.valid_fraction
            )));
        }
        if self.test_fraction + self.valid_fraction >= 1.0 {
            return Err(SplitError::Config(
                "test_fraction + valid_fraction must be below 1".into(),
            ));
        }
        Ok(())
    }

    /// `(test, valid)` counts for a user with `n` interactions.
    pub fn holdout_counts(&self, n: usize) -> (usize, usize) {
        if n < self.min_user_interactions.max(1) {
            return (0, 0);
        }
        let test = floor_fraction(self.test_fraction, n).max(1);
        let rest = n - test;
        let valid = floor_fraction(self.valid_fraction, rest).max(1).min(rest);
        (test, valid)
    }
}

/// Train/validation/test matrices over one shared id space.
#[derive(Debug, Clone)]
pub struct SplitBundle {
    pub train: InteractionMatrix,
    pub valid: InteractionMatrix,
    pub test: InteractionMatrix,
    pub config: SplitConfig,
    /// Hex SHA-256 over the three canonical split files.
    pub digest: String,
}

pub fn holdout_split(m: &InteractionMatrix, cfg: &SplitConfig) -> Result<SplitBundle, SplitError> {
    cfg.validate()?;
    if m.is_empty() {
        return Err(SplitError::Empty);
    }
    let per_user: Vec<(Vec<usize>, Vec<usize>, Vec<usize>)> = (0..m.n_users())
        .into_par_iter()
        .map(|u| {
            let mut items: Vec<usize> = m.row(u).iter().map(|&i| i as usize).collect();
            let (n_test, n_valid) = cfg.holdout_counts(items.len());
            if n_test == 0 {
                return (items, Vec::new(), Vec::new());
            }
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(u as u64);
            items.shuffle(&mut rng);
            let test = items[..n_test].to_vec();
            let valid = items[n_test..n_test + n_valid].to_vec();
            let train = items[n_test + n_valid..].to_vec();
            (train, valid, test)
        })
        .collect();

    let mut parts = [Vec::new(), Vec::new(), Vec::new()];
    for (u, (train, valid, test)) in per_user.into_iter().enumerate() {
        parts[0].extend(train.into_iter().map(|i| (u, i)));
        parts[1].extend(valid.into_iter().map(|i| (u, i)));
        parts[2].extend(test.into_iter().map(|i| (u, i)));
    }
    let [train, valid, test] = parts;
    let train = m.with_entries(train)?;
    let valid = m.with_entries(valid)?;
    let test = m.with_entries(test)?;
    let digest = bundle_digest(&file_bytes(&train), &file_bytes(&valid), &file_bytes(&test));
    Ok(SplitBundle {
        train,
        valid,
        test,
        config: cfg.clone(),
        digest,
    })
}

fn file_bytes(m: &InteractionMatrix) -> Vec<u8> {
    let mut buf = Vec::new();
    write_pairs(m, &mut buf).expect("writing to memory");
    buf
}

/// SHA-256 of `"train\n" ‖ train ‖ "valid\n" ‖ valid ‖ "test\n" ‖ test`
/// where each part is the canonical sorted `user<TAB>item` file content.
pub fn bundle_digest(train: &[u8], valid: &[u8], test: &[u8]) -> String {
    let mut h = Sha256::new();
    for (tag, bytes) in [(b"train\n" as &[u8], train), (b"valid\n", valid), (b"test\n", test)] {
        h.update(tag);
        h.update(bytes);
    }
    hex::encode(h.finalize())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Metadata written next to the split files. Carries the full id spaces so
/// any stage can load a single split file into the shared index space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub config: SplitConfig,
    pub digest: String,
    pub n_users: usize,
    pub n_items: usize,
    pub train_interactions: usize,
    pub valid_interactions: usize,
    pub test_interactions: usize,
    pub file_sha256: FileDigests,
    pub user_ids: IdMap,
    pub item_ids: IdMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigests {
    pub train: String,
    pub valid: String,
    pub test: String,
}

impl SplitBundle {
    pub fn manifest(&self) -> SplitManifest {
        SplitManifest {
            config: self.config.clone(),
            digest: self.digest.clone(),
            n_users: self.train.n_users(),
            n_items: self.train.n_items(),
            train_interactions: self.train.nnz(),
            valid_interactions: self.valid.nnz(),
            test_interactions: self.test.nnz(),
            file_sha256: FileDigests {
                train: sha256_hex(&file_bytes(&self.train)),
                valid: sha256_hex(&file_bytes(&self.valid)),
                test: sha256_hex(&file_bytes(&self.test)),
            },
            user_ids: self.train.users().clone(),
            item_ids: self.train.items().clone(),
        }
    }

    /// Writes the three split files and the manifest into `dir`.
    pub fn save(&self, dir: &Path) -> Result<SplitManifest, SplitError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        for (name, m) in [(TRAIN_FILE, &self.train), (VALID_FILE, &self.valid), (TEST_FILE, &self.test)]
        {
            let path = dir.join(name);
            fs::write(&path, file_bytes(m)).map_err(io_err(&path))?;
        }
        let manifest = self.manifest();
        let path = dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(&manifest)?;
        fs::write(&path, json + "\n").map_err(io_err(&path))?;
        Ok(manifest)
    }

    /// Loads all three splits and checks them against the manifest digest.
    pub fn load(dir: &Path) -> Result<Self, SplitError> {
        let manifest = SplitManifest::load(dir)?;
        let train = manifest.read_split(dir, SplitPart::Train)?;
        let valid = manifest.read_split(dir, SplitPart::Valid)?;
        let test = manifest.read_split(dir, SplitPart::Test)?;
        let digest = bundle_digest(&file_bytes(&train), &file_bytes(&valid), &file_bytes(&test));
        if digest != manifest.digest {
            return Err(SplitError::DigestMismatch {
                file: MANIFEST_FILE.into(),
            });
        }
        Ok(Self {
            train,
            valid,
            test,
            config: manifest.config,
            digest,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitPart {
    Train,
    Valid,
    Test,
}

impl SplitPart {
    pub fn file_name(self) -> &'static str {
        match self {
            SplitPart::Train => TRAIN_FILE,
            SplitPart::Valid => VALID_FILE,
            SplitPart::Test => TEST_FILE,
        }
    }
}

impl SplitManifest {
    pub fn load(dir: &Path) -> Result<Self, SplitError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Reads one split file into the manifest's id space, verifying its
    /// per-file digest.
    pub fn read_split(&self, dir: &Path, part: SplitPart) -> Result<InteractionMatrix, SplitError> {
        let path = dir.join(part.file_name());
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        let expected = match part {
            SplitPart::Train => &self.file_sha256.train,
            SplitPart::Valid => &self.file_sha256.valid,
            SplitPart::Test => &self.file_sha256.test,
        };
        if &sha256_hex(&bytes) != expected {
            return Err(SplitError::DigestMismatch {
                file: part.file_name().into(),
            });
        }
        let mut pairs = Vec::new();
        for (k, line) in bytes.lines().enumerate() {
            let line = line.map_err(io_err(&path))?;
            if line.is_empty() {
                continue;
            }
            let malformed = |message: String| DataError::Malformed { line: k + 1, message };
            let (u, i) = line
                .split_once('\t')
                .ok_or_else(|| malformed("expected user<TAB>item".into()))?;
            let u = self.user_ids.get(u).ok_or_else(|| DataError::UnknownId(u.into()))?;
            let i = self.item_ids.get(i).ok_or_else(|| DataError::UnknownId(i.into()))?;
            pairs.push((u, i));
        }
        Ok(InteractionMatrix::from_pairs(
            self.user_ids.clone(),
            self.item_ids.clone(),
            pairs,
        )?)
    }
}

/// Popularity segments of the item catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemSegments {
    pub head: Vec<usize>,
    pub tail: Vec<usize>,
    pub head_fraction: f64,
    is_head: Vec<bool>,
}

impl ItemSegments {
    pub fn is_head(&self, item: usize) -> bool {
        self.is_head[item]
    }

    pub fn n_items(&self) -> usize {
        self.is_head.len()
    }
}

/// Ranks items by training count (descending, ties by ascending index) and
/// puts the top `⌈head_fraction·N⌉` in the head.
pub fn head_tail_partition(
    train: &InteractionMatrix,
    head_fraction: f64,
) -> Result<ItemSegments, SplitError> {
    if !(head_fraction > 0.0 && head_fraction < 1.0) {
        return Err(SplitError::Config(format!(
            "head_fraction must lie in (0, 1), got {head_fraction}"
        )));
    }
    if train.is_empty() {
        return Err(SplitError::Empty);
    }
    let n = train.n_items();
    let degrees = train.item_degrees();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| degrees[b].cmp(&degrees[a]).then(a.cmp(&b)));
    let n_head = ceil_fraction(head_fraction, n).min(n);
    let mut is_head = vec![false; n];
    for &i in &order[..n_head] {
        is_head[i] = true;
    }
    let head = (0..n).filter(|&i| is_head[i]).collect();
    let tail = (0..n).filter(|&i| !is_head[i]).collect();
    Ok(ItemSegments {
        head,
        tail,
        head_fraction,
        is_head,
    })
}
