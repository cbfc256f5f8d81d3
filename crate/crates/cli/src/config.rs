//! Run configuration. A TOML file supplies the baseline; command-line flags
//! override individual fields.
//!
//! ```toml
//! seed = 7
//! workers = 4
//!
//! [data]
//! path = "ratings.csv"
//! name = "books"
//! [data.format]
//! delimiter = "comma"
//! rating_col = 2
//! min_rating = 4.0
//!
//! [split]
//! test_fraction = 0.15
//!
//! [model]
//! name = "fpsr"
//! params = { tau = 0.3, lambda = 0.2 }
//!
//! [eval]
//! cutoffs = [10, 20]
//! head_fraction = 0.1
//! baseline = "itemknn"
//!
//! [[bench.models]]
//! name = "itemknn"
//!
//! [hpo]
//! budget = 20
//! objective = "recall@20"
//!
//! [sweep]
//! family = "fpsr+d"
//! taus = [0.05, 0.15, 0.25]
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use partsim::data::Format;
use partsim::hpo::Domain;
use partsim::model::Params;
use partsim::split::SplitConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Global seed: split sampling, random scorer, search.
    pub seed: u64,
    pub workers: Option<usize>,
    pub data: DataSection,
    pub split: SplitSection,
    pub model: ModelSpec,
    pub eval: EvalSection,
    pub bench: BenchSection,
    pub hpo: HpoSection,
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub path: Option<PathBuf>,
    /// Dataset label in reports; defaults to the split directory name.
    pub name: Option<String>,
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub test_fraction: f64,
    pub valid_fraction: f64,
    pub min_user_interactions: usize,
}

impl Default for SplitSection {
    fn default() -> Self {
        let d = SplitConfig::default();
        Self {
            test_fraction: d.test_fraction,
            valid_fraction: d.valid_fraction,
            min_user_interactions: d.min_user_interactions,
        }
    }
}

impl SplitSection {
    pub fn with_seed(&self, seed: u64) -> SplitConfig {
        SplitConfig {
            seed,
            test_fraction: self.test_fraction,
            valid_fraction: self.valid_fraction,
            min_user_interactions: self.min_user_interactions,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    pub params: Params,
}

/// Which held-out part a command scores against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Valid,
    #[default]
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub cutoffs: Vec<usize>,
    /// Adds head and tail blocks to reports when set.
    pub head_fraction: Option<f64>,
    /// Reference model for significance tests; the first bench model when
    /// unset.
    pub baseline: Option<String>,
    pub target: Target,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            cutoffs: vec![10, 20],
            head_fraction: None,
            baseline: None,
            target: Target::Test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub models: Vec<ModelSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HpoSection {
    pub budget: usize,
    /// `recall@K` or `ndcg@K`, computed on the validation split.
    pub objective: String,
    /// Overrides the model's default space.
    pub space: Option<BTreeMap<String, Domain>>,
}

impl Default for HpoSection {
    fn default() -> Self {
        Self {
            budget: 20,
            objective: "recall@20".into(),
            space: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub family: Option<String>,
    pub taus: Vec<f64>,
    /// τ of the reference row; the model's `tau` parameter when unset.
    pub tau_best: Option<f64>,
    pub target: Target,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            family: None,
            taus: vec![0.05, 0.15, 0.25],
            tau_best: None,
            target: Target::Test,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))
    }
}

/// Parses `key=value`. Values are read as JSON when possible so numbers and
/// booleans keep their type; anything else is a string.
pub fn parse_param(raw: &str) -> Result<(String, serde_json::Value)> {
    let (k, v) = raw
        .split_once('=')
        .ok_or_else(|| CliError::usage(format!("parameter `{raw}` is not key=value")))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(CliError::usage(format!("parameter `{raw}` has an empty key")));
    }
    let v = v.trim();
    let value = serde_json::from_str(v).unwrap_or_else(|_| serde_json::Value::String(v.to_owned()));
    Ok((k.to_owned(), value))
}

/// Parses `metric@K` objectives such as `ndcg@20`.
pub fn parse_objective(raw: &str) -> Result<(partsim::eval::Metric, usize)> {
    use partsim::eval::Metric;
    let bad = || CliError::usage(format!("objective `{raw}` is not recall@K or ndcg@K"));
    let (m, k) = raw.split_once('@').ok_or_else(bad)?;
    let metric = match m.to_ascii_lowercase().as_str() {
        "recall" => Metric::Recall,
        "ndcg" => Metric::Ndcg,
        _ => return Err(bad()),
    };
    let k: usize = k.parse().map_err(|_| bad())?;
    if k == 0 {
        return Err(bad());
    }
    Ok((metric, k))
}
