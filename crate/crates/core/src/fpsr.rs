//! Partitioned similarity learning: per-partition closed-form local blocks,
//! an optional hub set shared by every block, and a low-rank global term.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{ease_closed_form, FitError, DEFAULT_DENSE_LIMIT};
use crate::data::{InteractionMatrix, NormalizedView};
use crate::linalg::ceil_fraction;
use crate::model::{GlobalFactor, PartitionMeta, SimilarityModel, SparseSim};
use crate::spectral::{recursive_partition, top_eigenpairs, EigConfig, SplitRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HubStrategy {
    #[default]
    None,
    Degree,
    Fiedler,
}

impl HubStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            HubStrategy::None => "none",
            HubStrategy::Degree => "degree",
            HubStrategy::Fiedler => "fiedler",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FpsrConfig {
    pub tau: f64,
    pub lambda: f64,
    pub global_rank: usize,
    pub local_l2: f64,
    pub theta: f64,
    pub hub_strategy: HubStrategy,
    pub hub_budget: f64,
    /// Largest augmented partition solved densely.
    pub dense_limit: usize,
    pub eig: EigConfig,
}

impl Default for FpsrConfig {
    fn default() -> Self {
        Self {
            tau: 0.2,
            lambda: 0.3,
            global_rank: 64,
            local_l2: 100.0,
            theta: 1e-4,
            hub_strategy: HubStrategy::None,
            hub_budget: 0.05,
            dense_limit: DEFAULT_DENSE_LIMIT,
            eig: EigConfig::default(),
        }
    }
}

impl FpsrConfig {
    /// Defaults for the degree-hub variant.
    pub fn degree_hubs() -> Self {
        Self {
            hub_strategy: HubStrategy::Degree,
            ..Self::default()
        }
    }

    /// Defaults for the Fiedler-hub variant.
    pub fn fiedler_hubs() -> Self {
        Self {
            hub_strategy: HubStrategy::Fiedler,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), FitError> {
        let bad = |m: &str| Err(FitError::Param(m.to_owned()));
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if !(self.lambda >= 0.0) {
            return bad("lambda must be non-negative");
        }
        if !(self.local_l2 > 0.0) {
            return bad("local_l2 must be positive");
        }
        if !(self.theta >= 0.0) {
            return bad("theta must be non-negative");
        }
        if self.hub_strategy != HubStrategy::None && !(0.0..1.0).contains(&self.hub_budget) {
            return bad("hub_budget must lie in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HubSet {
    /// Ascending by selection order.
    pub items: Vec<usize>,
    pub strategy: HubStrategy,
    /// Degree, or absolute Fiedler coordinate, per selected item.
    pub scores: Vec<f64>,
}

impl HubSet {
    pub fn empty(strategy: HubStrategy) -> Self {
        Self {
            items: Vec::new(),
            strategy,
            scores: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// The `⌈rho·N⌉` most interacted items, ties by ascending index.
pub fn select_hubs_degree(train: &InteractionMatrix, rho: f64) -> HubSet {
    let n = train.n_items();
    let budget = ceil_fraction(rho, n).min(n);
    let deg = train.item_degrees();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| deg[b].cmp(&deg[a]).then(a.cmp(&b)));
    order.truncate(budget);
    HubSet {
        scores: order.iter().map(|&i| deg[i] as f64).collect(),
        items: order,
        strategy: HubStrategy::Degree,
    }
}

/// Items closest to the cuts of the recorded splits.
///
/// Each split over `m` items nominates its `⌈rho·m⌉` items of smallest
/// `|coordinate|`. An item nominated more than once keeps the coordinate of
/// its first nomination. Nominees are ranked by `(|coordinate|, index)` and
/// cut to `⌈rho·N⌉`; the set can be smaller when there are fewer nominees.
pub fn select_hubs_fiedler(trace: &[SplitRecord], rho: f64, n_items: usize) -> Result<HubSet, FitError> {
    if trace.is_empty() {
        return Err(FitError::Param(
            "fiedler hubs need at least one partition split (tau < 1); use hub strategy none or degree".into(),
        ));
    }
    let mut first: BTreeMap<usize, f64> = BTreeMap::new();
    for split in trace {
        let m = split.items.len();
        let quota = ceil_fraction(rho, m).min(m);
        let mut local: Vec<usize> = (0..m).collect();
        local.sort_by(|&a, &b| {
            split.coords[a]
                .abs()
                .total_cmp(&split.coords[b].abs())
                .then(split.items[a].cmp(&split.items[b]))
        });
        for &a in &local[..quota] {
            first.entry(split.items[a]).or_insert(split.coords[a].abs());
        }
    }
    let mut ranked: Vec<(usize, f64)> = first.into_iter().collect();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    ranked.truncate(ceil_fraction(rho, n_items).min(n_items));
    Ok(HubSet {
        items: ranked.iter().map(|r| r.0).collect(),
        scores: ranked.iter().map(|r| r.1).collect(),
        strategy: HubStrategy::Fiedler,
    })
}

/// Closed-form ridge block over `items` (sorted, distinct), with negative
/// weights clamped to zero and weights below `theta` dropped. Entries use
/// global item indices and come out row-major.
pub fn local_learn(
    train: &InteractionMatrix,
    items: &[usize],
    l2: f64,
    theta: f64,
    dense_limit: usize,
) -> Result<Vec<(usize, usize, f64)>, FitError> {
    if !(l2 > 0.0) {
        return Err(FitError::Param("l2 must be positive".into()));
    }
    let m = items.len();
    if m > dense_limit {
        return Err(FitError::TooLarge {
            model: "fpsr",
            n_items: m,
            limit: dense_limit,
        });
    }
    if m <= 1 {
        return Ok(Vec::new());
    }
    let b = ease_closed_form(&train.gram_dense(items), l2)?;
    let mut out = Vec::new();
    for a in 0..m {
        for c in 0..m {
            let v = b[(a, c)].max(0.0);
            if a != c && v > 0.0 && v >= theta {
                out.push((items[a], items[c], v));
            }
        }
    }
    Ok(out)
}

/// Fits the partitioned model described by `cfg`.
pub fn fpsr_fit(train: &InteractionMatrix, cfg: &FpsrConfig) -> Result<SimilarityModel, FitError> {
    cfg.validate()?;
    let n = train.n_items();
    let partition = recursive_partition(train, cfg.tau, &cfg.eig)?;
    let hubs = match cfg.hub_strategy {
        HubStrategy::None => HubSet::empty(HubStrategy::None),
        HubStrategy::Degree => select_hubs_degree(train, cfg.hub_budget),
        HubStrategy::Fiedler => select_hubs_fiedler(&partition.split_trace, cfg.hub_budget, n)?,
    };
    let mut is_hub = vec![false; n];
    for &h in &hubs.items {
        is_hub[h] = true;
    }

    let members = partition.members();
    let warm: Vec<usize> = (0..partition.k()).filter(|&p| !partition.is_cold(p)).collect();
    let blocks: Vec<Vec<(usize, usize, f64)>> = warm
        .par_iter()
        .map(|&p| {
            let mut items: Vec<usize> = members[p].iter().copied().filter(|&i| !is_hub[i]).collect();
            items.extend(&hubs.items);
            items.sort_unstable();
            local_learn(train, &items, cfg.local_l2, cfg.theta, cfg.dense_limit)
        })
        .collect::<Result<_, _>>()?;

    let mut triples = Vec::new();
    let mut hub_pairs: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for block in blocks {
        for (i, j, v) in block {
            if is_hub[i] && is_hub[j] {
                *hub_pairs.entry((i, j)).or_insert(0.0) += v;
            } else {
                triples.push((i, j, v));
            }
        }
    }
    let n_blocks = warm.len() as f64;
    triples.extend(hub_pairs.into_iter().map(|((i, j), s)| (i, j, s / n_blocks)));

    let params = [
        ("tau", cfg.tau.into()),
        ("lambda", cfg.lambda.into()),
        ("global_rank", cfg.global_rank.into()),
        ("local_l2", cfg.local_l2.into()),
        ("theta", cfg.theta.into()),
        ("hub_strategy", cfg.hub_strategy.as_str().into()),
        ("hub_budget", cfg.hub_budget.into()),
    ]
    .into_iter()
    .map(|(k, v): (&str, serde_json::Value)| (k.to_owned(), v))
    .collect();
    let name = match cfg.hub_strategy {
        HubStrategy::None => "fpsr",
        HubStrategy::Degree => "fpsr+d",
        HubStrategy::Fiedler => "fpsr+f",
    };
    let mut model = SimilarityModel::new(name, params, SparseSim::from_triples(n, triples));
    if cfg.lambda > 0.0 && cfg.global_rank > 0 && n > 0 {
        model.global = global_factor(train, cfg)?;
    }
    model.partition = Some(PartitionMeta {
        tau: cfg.tau,
        k: partition.k(),
        sizes: partition.sizes.clone(),
        assignment: partition.assignment.clone(),
        cold: partition.cold.clone(),
        hub_strategy: cfg.hub_strategy.as_str().to_owned(),
        hub_items: hubs.items,
    });
    Ok(model)
}

fn global_factor(train: &InteractionMatrix, cfg: &FpsrConfig) -> Result<Option<GlobalFactor>, FitError> {
    let view = NormalizedView::new(train, 0.5, 0.5);
    let d = cfg.global_rank.min(train.n_items());
    let basis = top_eigenpairs(&view.gram(), d, &cfg.eig)?;
    let top = basis.values.first().copied().unwrap_or(0.0);
    if !(top > 0.0) {
        return Ok(None);
    }
    Ok(Some(GlobalFactor {
        weights: basis.values.iter().map(|&v| v.max(0.0) / top).collect(),
        vectors: basis.vectors,
        lambda: cfg.lambda,
    }))
}

/// Storage and solve costs of a fitted model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Footprint {
    pub nnz_sparse: usize,
    /// `Σ_k M_k²`, or `N²` for unpartitioned models.
    pub block_cost: u64,
    pub global_cost: usize,
}

pub fn model_footprint(model: &SimilarityModel) -> Footprint {
    let n = model.n_items() as u64;
    Footprint {
        nnz_sparse: model.sparse.nnz(),
        block_cost: match &model.partition {
            Some(p) => p.sizes.iter().map(|&m| (m as u64) * (m as u64)).sum(),
            None => n * n,
        },
        global_cost: model.global.as_ref().map_or(0, |g| g.rank() * model.n_items()),
    }
}
