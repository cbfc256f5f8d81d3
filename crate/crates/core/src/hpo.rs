//! Seeded hyperparameter search (random start, then a Parzen-estimator
//! sampler) and the τ sensitivity sweep.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::data::InteractionMatrix;
use crate::eval::{metrics, recommend_topk, Segment};
use crate::fpsr::{fpsr_fit, FpsrConfig, HubStrategy};
use crate::model::SimilarityModel;

pub type Config = BTreeMap<String, Value>;

/// Fraction of completed trials treated as good.
pub const GAMMA: f64 = 0.25;
/// Candidates drawn from the good density per parameter.
pub const CANDIDATES: usize = 24;

#[derive(Debug, Error)]
pub enum HpoError {
    #[error("trial budget must be at least 1")]
    Budget,
    #[error("search space has no parameters")]
    EmptySpace,
    #[error("invalid domain for {name}: {reason}")]
    Domain { name: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Domain {
    Discrete { values: Vec<Value> },
    Uniform { low: f64, high: f64 },
    LogUniform { low: f64, high: f64 },
}

impl Domain {
    pub fn discrete<T: Into<Value>>(values: impl IntoIterator<Item = T>) -> Self {
        Domain::Discrete {
            values: values.into_iter().map(Into::into).collect(),
        }
    }

    pub fn contains(&self, v: &Value) -> bool {
        match self {
            Domain::Discrete { values } => values.contains(v),
            Domain::Uniform { low, high } | Domain::LogUniform { low, high } => {
                v.as_f64().is_some_and(|x| x >= *low && x <= *high)
            }
        }
    }

    fn validate(&self, name: &str) -> Result<(), HpoError> {
        let reason = match self {
            Domain::Discrete { values } if values.is_empty() => "no values",
            Domain::Uniform { low, high } if !(low <= high && low.is_finite() && high.is_finite()) => {
                "bounds must be finite with low <= high"
            }
            Domain::LogUniform { low, high } if !(*low > 0.0 && low <= high && high.is_finite()) => {
                "bounds must satisfy 0 < low <= high"
            }
            _ => return Ok(()),
        };
        Err(HpoError::Domain {
            name: name.to_owned(),
            reason: reason.to_owned(),
        })
    }

    /// Continuous domains in sampling coordinates.
    fn range(&self) -> Option<(f64, f64)> {
        match self {
            Domain::Discrete { .. } => None,
            Domain::Uniform { low, high } => Some((*low, *high)),
            Domain::LogUniform { low, high } => Some((low.ln(), high.ln())),
        }
    }

    fn to_internal(&self, v: &Value) -> f64 {
        let x = v.as_f64().unwrap_or(f64::NAN);
        match self {
            Domain::LogUniform { .. } => x.ln(),
            _ => x,
        }
    }

    fn from_internal(&self, x: f64) -> Value {
        match self {
            Domain::Uniform { low, high } => x.clamp(*low, *high).into(),
            Domain::LogUniform { low, high } => x.exp().clamp(*low, *high).into(),
            Domain::Discrete { .. } => unreachable!("discrete domains sample by index"),
        }
    }

    fn sample_uniform(&self, rng: &mut ChaCha8Rng) -> Value {
        match self {
            Domain::Discrete { values } => values[rng.gen_range(0..values.len())].clone(),
            _ => {
                let (lo, hi) = self.range().expect("continuous");
                self.from_internal(if lo == hi { lo } else { rng.gen_range(lo..=hi) })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub params: BTreeMap<String, Domain>,
    pub budget: usize,
    pub seed: u64,
    /// Metric id reported with the trials, e.g. `recall@20`.
    pub objective: String,
}

impl SearchSpace {
    pub fn new(params: BTreeMap<String, Domain>) -> Self {
        Self {
            params,
            budget: 20,
            seed: 0,
            objective: "recall@20".into(),
        }
    }

    pub fn validate(&self) -> Result<(), HpoError> {
        if self.budget == 0 {
            return Err(HpoError::Budget);
        }
        if self.params.is_empty() {
            return Err(HpoError::EmptySpace);
        }
        for (name, d) in &self.params {
            d.validate(name)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub config: Config,
    /// `None` for failed trials.
    pub objective: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    pub sampler: String,
}

impl Trial {
    /// Failed trials rank as −∞.
    pub fn score(&self) -> f64 {
        self.objective.unwrap_or(f64::NEG_INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialLog {
    pub trials: Vec<Trial>,
    /// Highest objective, earliest on ties; `None` if every trial failed.
    pub best_index: Option<usize>,
}

impl TrialLog {
    pub fn best(&self) -> Option<&Trial> {
        self.best_index.map(|i| &self.trials[i])
    }

    /// One JSON object per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for t in &self.trials {
            serde_json::to_writer(&mut out, t)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Gaussian kernel mixture over observations plus one uniform prior
/// component on `[lo, hi]`.
struct Parzen {
    centers: Vec<f64>,
    bandwidth: f64,
    lo: f64,
    hi: f64,
}

impl Parzen {
    fn new(centers: Vec<f64>, lo: f64, hi: f64) -> Self {
        let width = (hi - lo).max(f64::MIN_POSITIVE);
        let n = centers.len().max(1) as f64;
        Self {
            bandwidth: (0.5 * width * n.powf(-0.2)).max(1e-3 * width),
            centers,
            lo,
            hi,
        }
    }

    fn pdf(&self, x: f64) -> f64 {
        let width = self.hi - self.lo;
        let prior = if width > 0.0 { 1.0 / width } else { 1.0 };
        let norm = 1.0 / (self.bandwidth * (2.0 * std::f64::consts::PI).sqrt());
        let kernels: f64 = self
            .centers
            .iter()
            .map(|c| norm * (-0.5 * ((x - c) / self.bandwidth).powi(2)).exp())
            .sum();
        (prior + kernels) / (self.centers.len() + 1) as f64
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        let pick = rng.gen_range(0..=self.centers.len());
        if pick == self.centers.len() || self.hi == self.lo {
            return if self.hi == self.lo { self.lo } else { rng.gen_range(self.lo..=self.hi) };
        }
        let kernel = Normal::new(self.centers[pick], self.bandwidth).expect("positive bandwidth");
        kernel.sample(rng).clamp(self.lo, self.hi)
    }
}

fn tpe_sample(space: &SearchSpace, history: &[Trial], rng: &mut ChaCha8Rng) -> Option<Config> {
    let mut done: Vec<&Trial> = history.iter().filter(|t| t.objective.is_some()).collect();
    if done.len() < 2 {
        return None;
    }
    done.sort_by(|a, b| b.score().total_cmp(&a.score()).then(a.index.cmp(&b.index)));
    let n_good = ((GAMMA * done.len() as f64).ceil() as usize).clamp(1, done.len() - 1);
    let (good, bad) = done.split_at(n_good);
    let mut config = Config::new();
    for (name, domain) in &space.params {
        let value = match domain {
            Domain::Discrete { values } => {
                let m = values.len() as f64;
                let weight = |set: &[&Trial], v: &Value| {
                    let hits = set.iter().filter(|t| t.config.get(name) == Some(v)).count() as f64;
                    (hits + 1.0) / (set.len() as f64 + m)
                };
                let l: Vec<f64> = values.iter().map(|v| weight(good, v)).collect();
                let g: Vec<f64> = values.iter().map(|v| weight(bad, v)).collect();
                let total: f64 = l.iter().sum();
                let mut best: Option<(usize, f64)> = None;
                for _ in 0..CANDIDATES {
                    let mut r = rng.gen::<f64>() * total;
                    let mut c = values.len() - 1;
                    for (k, w) in l.iter().enumerate() {
                        if r < *w {
                            c = k;
                            break;
                        }
                        r -= w;
                    }
                    let ratio = l[c] / g[c];
                    if best.map_or(true, |(_, b)| ratio > b) {
                        best = Some((c, ratio));
                    }
                }
                values[best.expect("at least one candidate").0].clone()
            }
            _ => {
                let (lo, hi) = domain.range().expect("continuous");
                let centers = |set: &[&Trial]| -> Vec<f64> {
                    set.iter()
                        .filter_map(|t| t.config.get(name))
                        .map(|v| domain.to_internal(v))
                        .filter(|x| x.is_finite())
                        .collect()
                };
                let l = Parzen::new(centers(good), lo, hi);
                let g = Parzen::new(centers(bad), lo, hi);
                let mut best: Option<(f64, f64)> = None;
                for _ in 0..CANDIDATES {
                    let x = l.sample(rng);
                    let ratio = l.pdf(x) / g.pdf(x);
                    if best.map_or(true, |(_, b)| ratio > b) {
                        best = Some((x, ratio));
                    }
                }
                domain.from_internal(best.expect("at least one candidate").0)
            }
        };
        config.insert(name.clone(), value);
    }
    Some(config)
}

/// Runs `space.budget` trials: the first `⌈budget/4⌉` sampled uniformly,
/// the rest from the good/bad density ratio of completed trials. Fit or
/// evaluation errors are logged as failed trials and the search goes on.
pub fn search<M, E1, E2>(
    space: &SearchSpace,
    mut fit: impl FnMut(&Config) -> Result<M, E1>,
    mut eval: impl FnMut(&M) -> Result<f64, E2>,
) -> Result<TrialLog, HpoError>
where
    E1: Display,
    E2: Display,
{
    space.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(space.seed);
    let startup = space.budget.div_ceil(4);
    let mut trials: Vec<Trial> = Vec::with_capacity(space.budget);
    for index in 0..space.budget {
        let guided = if index >= startup { tpe_sample(space, &trials, &mut rng) } else { None };
        let (config, sampler) = match guided {
            Some(c) => (c, "tpe"),
            None => (
                space
                    .params
                    .iter()
                    .map(|(k, d)| (k.clone(), d.sample_uniform(&mut rng)))
                    .collect(),
                "random",
            ),
        };
        let outcome = fit(&config)
            .map_err(|e| format!("fit: {e}"))
            .and_then(|m| eval(&m).map_err(|e| format!("eval: {e}")));
        let (objective, error) = match outcome {
            Ok(v) if v.is_finite() => (Some(v), None),
            Ok(v) => (None, Some(format!("non-finite objective {v}"))),
            Err(e) => (None, Some(e)),
        };
        if let Some(e) = &error {
            log::warn!("trial {index} failed: {e}");
        }
        trials.push(Trial {
            index,
            config,
            objective,
            error,
            sampler: sampler.into(),
        });
    }
    let mut best_index: Option<usize> = None;
    for t in &trials {
        if t.objective.is_some() && best_index.map_or(true, |b| t.score() > trials[b].score()) {
            best_index = Some(t.index);
        }
    }
    Ok(TrialLog { trials, best_index })
}

/// Default spaces. λ and τ follow the usual `{0.1, …, 0.5}` grids; the
/// remaining ranges are choices of this crate.
pub fn default_space(model: &str) -> Option<SearchSpace> {
    let grid = || Domain::discrete([0.1, 0.2, 0.3, 0.4, 0.5]);
    let mut p = BTreeMap::new();
    match model {
        "itemknn" => {
            p.insert("neighbors".into(), Domain::discrete([20, 50, 100, 200]));
            p.insert("shrink".into(), Domain::Uniform { low: 0.0, high: 100.0 });
        }
        "rp3beta" => {
            p.insert("neighbors".into(), Domain::discrete([20, 50, 100, 200]));
            p.insert("beta".into(), Domain::Uniform { low: 0.0, high: 1.0 });
        }
        "ease" => {
            p.insert("l2".into(), Domain::LogUniform { low: 1.0, high: 1e4 });
        }
        "gfcf" => {
            p.insert("rank".into(), Domain::discrete([16, 32, 64, 128]));
            p.insert("linear_weight".into(), Domain::Uniform { low: 0.0, high: 1.0 });
        }
        "fpsr" | "fpsr+d" | "fpsr+f" => {
            p.insert("lambda".into(), grid());
            p.insert("tau".into(), grid());
            p.insert("global_rank".into(), Domain::discrete([16, 32, 64]));
            p.insert("local_l2".into(), Domain::LogUniform { low: 1.0, high: 1e3 });
            p.insert("theta".into(), Domain::discrete([0.0, 1e-4, 1e-3]));
            if model != "fpsr" {
                p.insert("hub_budget".into(), Domain::discrete([0.05]));
            }
        }
        "bism" => {
            p.insert("blocks".into(), Domain::discrete([2, 4, 8, 16]));
            p.insert("alpha".into(), Domain::LogUniform { low: 1e-2, high: 10.0 });
            p.insert("beta_l".into(), Domain::LogUniform { low: 1.0, high: 1e3 });
            p.insert("beta_g".into(), Domain::LogUniform { low: 1.0, high: 1e3 });
        }
        _ => return None,
    }
    Some(SearchSpace::new(p))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "fpsr")]
    Fpsr,
    #[serde(rename = "fpsr+d")]
    FpsrD,
    #[serde(rename = "fpsr+f")]
    FpsrF,
}

impl Family {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "fpsr" => Some(Family::Fpsr),
            "fpsr+d" => Some(Family::FpsrD),
            "fpsr+f" => Some(Family::FpsrF),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Fpsr => "fpsr",
            Family::FpsrD => "fpsr+d",
            Family::FpsrF => "fpsr+f",
        }
    }

    pub fn hub_strategy(self) -> HubStrategy {
        match self {
            Family::Fpsr => HubStrategy::None,
            Family::FpsrD => HubStrategy::Degree,
            Family::FpsrF => HubStrategy::Fiedler,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub family: Family,
    /// The τ value, or `tau_best`.
    pub tau_label: String,
    pub tau: f64,
    pub recall: Option<f64>,
    pub ndcg: Option<f64>,
    pub status: String,
}

pub const SWEEP_K: usize = 20;

/// One fitted point of a τ sweep.
#[derive(Debug, Clone)]
pub struct SweepFit {
    pub tau_label: String,
    pub tau: f64,
    pub model: Result<SimilarityModel, String>,
}

/// Fits `family` at each τ with every other setting from `fixed`, then a
/// final `tau_best` fit at `fixed.tau`. Only `train` is touched.
pub fn sweep_fit(family: Family, taus: &[f64], fixed: &FpsrConfig, train: &InteractionMatrix) -> Vec<SweepFit> {
    let run = |tau: f64, tau_label: String| {
        let cfg = FpsrConfig {
            tau,
            hub_strategy: family.hub_strategy(),
            ..fixed.clone()
        };
        SweepFit {
            tau_label,
            tau,
            model: fpsr_fit(train, &cfg).map_err(|e| e.to_string()),
        }
    };
    let mut fits: Vec<SweepFit> = taus.iter().map(|&t| run(t, format!("{t}"))).collect();
    fits.push(run(fixed.tau, "tau_best".into()));
    fits
}

/// Scores sweep fits by Recall/nDCG@20 on `target`; failed fits become
/// failed rows.
pub fn sweep_score(
    family: Family,
    fits: &[SweepFit],
    train: &InteractionMatrix,
    target: &InteractionMatrix,
) -> Vec<SweepRow> {
    let users: Vec<usize> = (0..target.n_users()).filter(|&u| target.user_degree(u) > 0).collect();
    fits.iter()
        .map(|fit| {
            let result = fit.model.clone().and_then(|model| {
                let lists = recommend_topk(&model, train, &users, SWEEP_K).map_err(|e| e.to_string())?;
                metrics(&lists, target, SWEEP_K, Segment::Overall, None).map_err(|e| e.to_string())
            });
            let (recall, ndcg, status) = match result {
                Ok(r) => (Some(r.recall), Some(r.ndcg), "ok".to_owned()),
                Err(e) => (None, None, format!("failed: {e}")),
            };
            SweepRow {
                family,
                tau_label: fit.tau_label.clone(),
                tau: fit.tau,
                recall,
                ndcg,
                status,
            }
        })
        .collect()
}

/// [`sweep_fit`] followed by [`sweep_score`].
pub fn tau_sweep(
    family: Family,
    taus: &[f64],
    fixed: &FpsrConfig,
    train: &InteractionMatrix,
    target: &InteractionMatrix,
) -> Vec<SweepRow> {
    sweep_score(family, &sweep_fit(family, taus, fixed, train), train, target)
}

pub const SWEEP_HEADER: &str = "family,tau_label,tau,recall@20,ndcg@20,status";

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER.split(','))?;
    let num = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
    for r in rows {
        w.write_record([
            r.family.as_str().to_owned(),
            r.tau_label.clone(),
            r.tau.to_string(),
            num(r.recall),
            num(r.ndcg),
            r.status.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
