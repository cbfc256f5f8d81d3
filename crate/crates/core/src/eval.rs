//! Top-K recommendation, Recall/nDCG with head/tail segments, and paired
//! significance tests.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::data::InteractionMatrix;
use crate::model::Recommender;
use crate::split::ItemSegments;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cutoff K must be at least 1")]
    Cutoff,
    #[error("model covers {model} items but the data has {data}")]
    Dimension { model: usize, data: usize },
    #[error("paired samples differ in length ({0} vs {1})")]
    Length(usize, usize),
    #[error("a paired test needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("segment {0} requested without head/tail item segments")]
    MissingSegments(Segment),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub user: usize,
    pub items: Vec<usize>,
    pub scores: Vec<f64>,
}

/// Scores every item for each user, drops the user's training items, and
/// keeps the `k` best by descending score, ties by ascending item index.
pub fn recommend_topk<M: Recommender + ?Sized>(
    model: &M,
    train: &InteractionMatrix,
    users: &[usize],
    k: usize,
) -> Result<Vec<RankedList>, EvalError> {
    if k == 0 {
        return Err(EvalError::Cutoff);
    }
    let n = train.n_items();
    if model.n_items() != n {
        return Err(EvalError::Dimension {
            model: model.n_items(),
            data: n,
        });
    }
    Ok(users
        .par_iter()
        .map_init(
            || (vec![0.0; n], vec![false; n]),
            |(scores, seen), &u| {
                let history = train.row(u);
                scores.iter_mut().for_each(|s| *s = 0.0);
                model.score_into(u, history, scores);
                for &i in history {
                    seen[i as usize] = true;
                }
                let mut cand: Vec<usize> = (0..n).filter(|&i| !seen[i]).collect();
                for &i in history {
                    seen[i as usize] = false;
                }
                let order = |a: &usize, b: &usize| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b));
                if cand.len() > k {
                    cand.select_nth_unstable_by(k - 1, order);
                    cand.truncate(k);
                }
                cand.sort_by(order);
                RankedList {
                    user: u,
                    scores: cand.iter().map(|&i| scores[i]).collect(),
                    items: cand,
                }
            },
        )
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Segment {
    Head,
    Overall,
    Tail,
}

impl Segment {
    pub fn as_str(self) -> &'static str {
        match self {
            Segment::Head => "head",
            Segment::Overall => "overall",
            Segment::Tail => "tail",
        }
    }
}

impl std::fmt::Display for Segment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserMetrics {
    pub recall: f64,
    pub ndcg: f64,
    pub hits: usize,
    /// Test items of the user inside the segment.
    pub relevant: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub k: usize,
    pub segment: Segment,
    pub per_user: BTreeMap<usize, UserMetrics>,
    pub recall: f64,
    pub ndcg: f64,
    pub evaluated_users: usize,
}

impl MetricReport {
    pub fn per_user_values(&self, metric: Metric) -> Vec<f64> {
        self.per_user
            .values()
            .map(|m| match metric {
                Metric::Recall => m.recall,
                Metric::Ndcg => m.ndcg,
            })
            .collect()
    }

    pub fn value(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Recall => self.recall,
            Metric::Ndcg => self.ndcg,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Recall,
    Ndcg,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Recall => "recall",
            Metric::Ndcg => "ndcg",
        }
    }
}

fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

/// Recall@K and nDCG@K over the users of `test`.
///
/// Only the first `k` entries of each list count. The test set is filtered to
/// the segment and users left without test items are skipped; users with no
/// list count as recommending nothing.
pub fn metrics(
    lists: &[RankedList],
    test: &InteractionMatrix,
    k: usize,
    segment: Segment,
    segments: Option<&ItemSegments>,
) -> Result<MetricReport, EvalError> {
    if k == 0 {
        return Err(EvalError::Cutoff);
    }
    if segment != Segment::Overall && segments.is_none() {
        return Err(EvalError::MissingSegments(segment));
    }
    let keep = |i: usize| match (segment, segments) {
        (Segment::Head, Some(s)) => s.is_head(i),
        (Segment::Tail, Some(s)) => !s.is_head(i),
        _ => true,
    };
    let by_user: BTreeMap<usize, &RankedList> = lists.iter().map(|l| (l.user, l)).collect();
    let mut per_user = BTreeMap::new();
    let mut relevant = vec![false; test.n_items()];
    for u in 0..test.n_users() {
        let truth: Vec<usize> = test
            .row(u)
            .iter()
            .map(|&i| i as usize)
            .filter(|&i| keep(i))
            .collect();
        if truth.is_empty() {
            continue;
        }
        for &i in &truth {
            relevant[i] = true;
        }
        let mut hits = 0;
        let mut dcg = 0.0;
        if let Some(list) = by_user.get(&u) {
            for (r, &i) in list.items.iter().take(k).enumerate() {
                if i < relevant.len() && relevant[i] {
                    hits += 1;
                    dcg += discount(r + 1);
                }
            }
        }
        for &i in &truth {
            relevant[i] = false;
        }
        let idcg: f64 = (1..=k.min(truth.len())).map(discount).sum();
        per_user.insert(
            u,
            UserMetrics {
                recall: hits as f64 / truth.len() as f64,
                ndcg: dcg / idcg,
                hits,
                relevant: truth.len(),
            },
        );
    }
    let count = per_user.len();
    let mean = |f: fn(&UserMetrics) -> f64| {
        if count == 0 {
            0.0
        } else {
            per_user.values().map(f).sum::<f64>() / count as f64
        }
    };
    Ok(MetricReport {
        k,
        segment,
        recall: mean(|m| m.recall),
        ndcg: mean(|m| m.ndcg),
        evaluated_users: count,
        per_user,
    })
}

/// Two-sided paired t-test p-value. All-zero differences give 1.
pub fn paired_significance(a: &[f64], b: &[f64]) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::Length(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(EvalError::TooFewSamples(n));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if d.iter().all(|&x| x == 0.0) {
        return Ok(1.0);
    }
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return Ok(0.0);
    }
    let t = mean / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("positive degrees of freedom");
    Ok((2.0 * dist.sf(t.abs())).min(1.0))
}

/// One line of a flat results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub dataset: String,
    pub segment: Segment,
    pub k: usize,
    pub metric: Metric,
    pub value: f64,
    pub p_value_vs_baseline: Option<f64>,
}

pub const REPORT_HEADER: &str = "model,dataset,segment,K,metric,value,p_value_vs_baseline";

pub fn write_report_csv<W: Write>(rows: &[ReportRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_HEADER.split(','))?;
    for r in rows {
        w.write_record([
            r.model.clone(),
            r.dataset.clone(),
            r.segment.to_string(),
            r.k.to_string(),
            r.metric.as_str().to_owned(),
            format!("{:.6}", r.value),
            r.p_value_vs_baseline.map_or(String::new(), |p| format!("{p:.6}")),
        ])?;
    }
    w.flush()?;
    Ok(())
}
