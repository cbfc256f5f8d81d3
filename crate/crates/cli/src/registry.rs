//! Name → fitter table shared by `fit`, `bench` and `hpo`.

use partsim::baselines::{
    ease_fit, gfcf_fit, itemknn_fit, popularity_scores, random_scores, rp3beta_fit, EaseConfig, GfcfConfig,
    ItemKnnConfig, Rp3BetaConfig,
};
use partsim::bism::{bism_fit, BismConfig};
use partsim::fpsr::{fpsr_fit, model_footprint, FpsrConfig};
use partsim::model::Params;
use partsim::{InteractionMatrix, Model, SimilarityModel};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{CliError, Result};

pub const MODELS: &[&str] = &[
    "random", "mostpop", "itemknn", "rp3beta", "ease", "gfcf", "fpsr", "fpsr+d", "fpsr+f", "bism",
];

pub fn check_name(name: &str) -> Result<()> {
    if MODELS.contains(&name) {
        Ok(())
    } else {
        Err(CliError::usage(format!(
            "unknown model `{name}`; registered models: {}",
            MODELS.join(", ")
        )))
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
struct RandomParams {
    seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct NoParams {}

/// Applies `params` on top of `base`, rejecting keys the config lacks.
fn overlay<T: Serialize + DeserializeOwned>(model: &str, base: T, params: &Params) -> Result<T> {
    let mut value = serde_json::to_value(&base).map_err(CliError::runtime)?;
    let obj = value.as_object_mut().expect("configs serialise to objects");
    for (k, v) in params {
        if !obj.contains_key(k) {
            let known: Vec<&str> = obj.keys().map(String::as_str).collect();
            return Err(CliError::usage(format!(
                "unknown parameter `{k}` for model `{model}`; accepted: {}",
                known.join(", ")
            )));
        }
        obj.insert(k.clone(), v.clone());
    }
    serde_json::from_value(value).map_err(|e| CliError::usage(format!("invalid parameters for `{model}`: {e}")))
}

/// FPSR configuration of one of the three FPSR variants.
pub fn fpsr_config(name: &str, params: &Params) -> Result<FpsrConfig> {
    let base = match name {
        "fpsr" => FpsrConfig::default(),
        "fpsr+d" => FpsrConfig::degree_hubs(),
        "fpsr+f" => FpsrConfig::fiedler_hubs(),
        other => return Err(CliError::usage(format!("`{other}` is not an FPSR variant"))),
    };
    let cfg = overlay(name, base, params)?;
    cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
    Ok(cfg)
}

/// Every parameter the model accepts, with its default.
pub fn default_params(name: &str) -> Result<Value> {
    check_name(name)?;
    let v = match name {
        "random" => serde_json::to_value(RandomParams::default()),
        "mostpop" => serde_json::to_value(NoParams {}),
        "itemknn" => serde_json::to_value(ItemKnnConfig::default()),
        "rp3beta" => serde_json::to_value(Rp3BetaConfig::default()),
        "ease" => serde_json::to_value(EaseConfig::default()),
        "gfcf" => serde_json::to_value(GfcfConfig::default()),
        "bism" => serde_json::to_value(BismConfig::default()),
        _ => serde_json::to_value(fpsr_config(name, &Params::new())?),
    };
    v.map_err(CliError::runtime)
}

pub struct Fitted {
    pub model: Model,
    /// Model summary plus solver traces, written next to the model file.
    pub diagnostics: Value,
}

fn similarity_summary(m: &SimilarityModel) -> Value {
    let fp = model_footprint(m);
    let n = m.n_items() as f64;
    let mut v = json!({
        "n_items": m.n_items(),
        "nnz": m.sparse.nnz(),
        "global_rank": m.global.as_ref().map_or(0, |g| g.rank()),
        "footprint": {
            "nnz_sparse": fp.nnz_sparse,
            "block_cost": fp.block_cost,
            "block_cost_fraction": fp.block_cost as f64 / (n * n),
            "global_cost": fp.global_cost,
        },
    });
    if let Some(p) = &m.partition {
        v["partition"] = json!({
            "tau": p.tau,
            "k": p.k,
            "sizes": p.sizes,
            "cold": p.cold,
            "hub_strategy": p.hub_strategy,
            "hub_items": p.hub_items,
        });
    }
    v
}

fn fit_err(e: impl std::fmt::Display) -> CliError {
    CliError::runtime(format!("fit failed: {e}"))
}

/// Fits a registered model on `train`. `seed` feeds seeded models unless
/// their parameters name one.
pub fn fit(name: &str, params: &Params, train: &InteractionMatrix, seed: u64) -> Result<Fitted> {
    check_name(name)?;
    let mut solver = Value::Null;
    let model = match name {
        "random" => {
            let p = overlay(name, RandomParams::default(), params)?;
            Model::Scorer {
                name: name.into(),
                scorer: random_scores(p.seed.unwrap_or(seed), train.n_items()),
            }
        }
        "mostpop" => {
            overlay(name, NoParams {}, params)?;
            Model::Scorer {
                name: name.into(),
                scorer: popularity_scores(train),
            }
        }
        "itemknn" => {
            Model::Similarity(itemknn_fit(train, &overlay(name, ItemKnnConfig::default(), params)?).map_err(fit_err)?)
        }
        "rp3beta" => {
            Model::Similarity(rp3beta_fit(train, &overlay(name, Rp3BetaConfig::default(), params)?).map_err(fit_err)?)
        }
        "ease" => Model::Similarity(ease_fit(train, &overlay(name, EaseConfig::default(), params)?).map_err(fit_err)?),
        "gfcf" => Model::Similarity(gfcf_fit(train, &overlay(name, GfcfConfig::default(), params)?).map_err(fit_err)?),
        "bism" => {
            let (m, state) = bism_fit(train, &overlay(name, BismConfig::default(), params)?).map_err(fit_err)?;
            solver = state.diagnostics();
            Model::Similarity(m)
        }
        _ => Model::Similarity(fpsr_fit(train, &fpsr_config(name, params)?).map_err(fit_err)?),
    };
    let mut diagnostics = json!({
        "model": name,
        "digest": model.digest(),
    });
    if let Model::Similarity(m) = &model {
        diagnostics["params"] = json!(m.params);
        diagnostics["summary"] = similarity_summary(m);
    }
    if !solver.is_null() {
        diagnostics["solver"] = solver;
    }
    Ok(Fitted { model, diagnostics })
}
