//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the verdict lines always
//! reach the terminal. Pass criterion numbers as arguments to run a subset.
//! The process fails when any criterion fails outside [`KNOWN_RED`].

#[path = "../common/mod.rs"]
mod common;
mod oracles;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use common::{ok, read_json, reads, s, write_planted};
use nalgebra::{DMatrix, SymmetricEigen};
use oracles::*;
use partsim::baselines::{ease_fit, EaseConfig};
use partsim::bism::{bism_solve, BismConfig};
use partsim::data::gini;
use partsim::eval::{metrics, recommend_topk, RankedList, Segment};
use partsim::fpsr::{fpsr_fit, FpsrConfig};
use partsim::hpo::{sweep_fit, sweep_score, Family};
use partsim::model::Params;
use partsim::spectral::{recursive_partition, top_eigenpairs, EigConfig, PartitionAssignment};
use partsim::split::{holdout_split, SplitConfig, SplitManifest, SplitPart};
use partsim::synth::{planted, PlantedConfig};
use partsim::{InteractionMatrix, Model, SimilarityModel};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

// Pinned tolerances and budgets.
const C1_BUDGET: Duration = Duration::from_secs(60);
const C2_EIGENVALUE_TOL: f64 = 1e-8;
const C2_ANGLE_TOL: f64 = 1e-6;
const C3_TOL: f64 = 1e-10;
const C6_PURITY: f64 = 0.95;
const C6_MASS: f64 = 0.90;
const C6_BUDGET: Duration = Duration::from_secs(120);
const C7_RATIO: f64 = 2.0;
const C9_SLACK: f64 = 1e-9;
const C9_RIDGE_TOL: f64 = 1e-8;
const C9_CROSS_MASS: f64 = 0.05;
const C10_VALUE_TOL: f64 = 1e-12;
const C12_BUDGET: Duration = Duration::from_secs(300);
const C12_BLOCK_FRACTION: f64 = 0.05;

/// Sub-checks that are known to fail, with the reason in the README.
const KNOWN_RED: &[(usize, &str)] = &[(12, "block_cost")];

struct Check {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn check(id: &'static str, pass: bool, detail: impl Into<String>) -> Check {
    Check { id, pass, detail: detail.into() }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(usize, &str, fn() -> Vec<Check>); 12] = [
        (1, "partition bound", c1_partition_bound),
        (2, "eigen oracle", c2_eigen_oracle),
        (3, "EASE closed form", c3_ease),
        (4, "metric oracle", c4_metrics),
        (5, "split protocol", c5_split_protocol),
        (6, "planted-structure recovery", c6_planted),
        (7, "tau-robustness trend", c7_tau_trend),
        (8, "hub structure", c8_hub_structure),
        (9, "BISM convergence", c9_bism),
        (10, "long-tail decomposition", c10_decomposition),
        (11, "Gini exactness", c11_gini),
        (12, "end-to-end pipeline", c12_end_to_end),
    ];
    let mut hard_failures = 0;
    let mut known = 0;
    let mut passed = 0;
    let mut ran = 0;
    for (n, title, f) in criteria {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let checks = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            vec![check("panic", false, msg)]
        });
        let failed: Vec<&Check> = checks.iter().filter(|c| !c.pass).collect();
        let all_known = !failed.is_empty() && failed.iter().all(|c| KNOWN_RED.contains(&(n, c.id)));
        let verdict = if failed.is_empty() { "PASS" } else { "FAIL" };
        let note = if all_known { " (known red)" } else { "" };
        println!("[{verdict}] {n:>2} {title}{note} [{:.1}s]", start.elapsed().as_secs_f64());
        for c in &checks {
            println!("       {} {}: {}", if c.pass { "ok  " } else { "FAIL" }, c.id, c.detail);
        }
        std::io::stdout().flush().ok();
        match (failed.is_empty(), all_known) {
            (true, _) => passed += 1,
            (false, true) => known += 1,
            (false, false) => hard_failures += 1,
        }
    }
    println!("acceptance: {passed}/{ran} pass, {known} known red, {hard_failures} unexpected failures");
    if hard_failures > 0 {
        std::process::exit(1);
    }
}

/// Exact `⌈k·n/20⌉` for τ = k/20.
fn bound_twentieths(k: usize, n: usize) -> usize {
    (k * n).div_ceil(20)
}

fn partition_violations(p: &PartitionAssignment, n: usize, bound: usize) -> Vec<String> {
    let mut out = Vec::new();
    if p.assignment.len() != n {
        out.push(format!("assignment covers {} of {n} items", p.assignment.len()));
        return out;
    }
    let mut recount = vec![0usize; p.sizes.len()];
    for &a in &p.assignment {
        if a >= recount.len() {
            out.push(format!("partition id {a} out of range"));
            return out;
        }
        recount[a] += 1;
    }
    if recount != p.sizes {
        out.push("sizes disagree with the assignment".into());
    }
    if recount.iter().any(|&c| c == 0) {
        out.push("empty partition".into());
    }
    if let Some(&max) = recount.iter().max() {
        if max > bound {
            out.push(format!("partition of {max} items exceeds bound {bound}"));
        }
    }
    out
}

fn c1_partition_bound() -> Vec<Check> {
    let start = Instant::now();
    let mut r = rng(101);
    let (mut runs, mut problems, mut largest_n) = (0, Vec::new(), 0);
    for d in 0..50 {
        let items = r.gen_range(10..=500);
        let users = r.gen_range(30..=300);
        let m = if d % 2 == 0 {
            random_matrix(&mut r, users, items, (6.0 / items as f64).min(0.3))
        } else {
            planted(&PlantedConfig {
                n_users: users,
                n_items: items,
                clusters: r.gen_range(2..=10),
                p_in: r.gen_range(0.05..0.3),
                p_out: r.gen_range(0.0..0.02),
                popularity_skew: r.gen_range(0.0..1.2),
                seed: d,
                ..Default::default()
            })
            .matrix
        };
        largest_n = largest_n.max(items);
        for k in 1..=20 {
            let tau = k as f64 / 20.0;
            runs += 1;
            match recursive_partition(&m, tau, &EigConfig::default()) {
                Ok(p) => {
                    for v in partition_violations(&p, items, bound_twentieths(k, items)) {
                        problems.push(format!("dataset {d} tau {tau}: {v}"));
                    }
                }
                Err(e) => problems.push(format!("dataset {d} tau {tau}: {e}")),
            }
        }
    }
    let took = start.elapsed();
    vec![
        check(
            "bound",
            problems.is_empty(),
            format!("{runs} partitions of 50 datasets (N <= {largest_n}), {} violations {:?}", problems.len(), problems.iter().take(3).collect::<Vec<_>>()),
        ),
        check("runtime", took < C1_BUDGET, format!("{:.1}s (< {}s)", took.as_secs_f64(), C1_BUDGET.as_secs())),
    ]
}

fn c2_eigen_oracle() -> Vec<Check> {
    let mut r = rng(102);
    let (mut worst_value, mut worst_angle, mut errors) = (0.0f64, 0.0f64, 0);
    for _ in 0..100 {
        let b = DMatrix::from_fn(40, 40, |_, _| r.gen_range(-1.0..1.0));
        let a = b.transpose() * &b;
        let Ok(basis) = top_eigenpairs(&a, 8, &EigConfig::default()) else {
            errors += 1;
            continue;
        };
        let dense = SymmetricEigen::new(a.clone());
        let mut order: Vec<usize> = (0..40).collect();
        order.sort_by(|&x, &y| dense.eigenvalues[y].total_cmp(&dense.eigenvalues[x]));
        for k in 0..8 {
            worst_value = worst_value.max((basis.values[k] - dense.eigenvalues[order[k]]).abs());
        }
        let ours = DMatrix::from_fn(40, 8, |i, k| basis.vectors[k][i]);
        let theirs = DMatrix::from_fn(40, 8, |i, k| dense.eigenvectors[(i, order[k])]);
        let min_cos = (ours.transpose() * theirs).singular_values().iter().fold(1.0f64, |m, &c| m.min(c));
        worst_angle = worst_angle.max(min_cos.min(1.0).acos());
    }
    vec![
        check("solver", errors == 0, format!("{errors} of 100 solves failed")),
        check("eigenvalues", worst_value < C2_EIGENVALUE_TOL, format!("max |Δλ| {worst_value:.2e} (< {C2_EIGENVALUE_TOL:e})")),
        check("subspace", worst_angle < C2_ANGLE_TOL, format!("max principal angle {worst_angle:.2e} (< {C2_ANGLE_TOL:e})")),
    ]
}

fn c3_ease() -> Vec<Check> {
    let mut r = rng(103);
    let (mut worst, mut diag_nonzero, mut errors) = (0.0f64, 0, 0);
    for _ in 0..50 {
        let items = r.gen_range(2..=30);
        let users = r.gen_range(items..=60);
        let density = r.gen_range(0.1..0.5);
        let m = random_matrix(&mut r, users, items, density);
        let l2 = r.gen_range(0.5..50.0);
        let Ok(model) = ease_fit(&m, &EaseConfig { l2, ..Default::default() }) else {
            errors += 1;
            continue;
        };
        let mut g = naive_gram(&m);
        for (i, row) in g.iter_mut().enumerate() {
            row[i] += l2;
        }
        let p = gauss_jordan_inverse(&g);
        for i in 0..items {
            if model.sparse.get(i, i) != 0.0 {
                diag_nonzero += 1;
            }
            for j in 0..items {
                if i != j {
                    worst = worst.max((model.sparse.get(i, j) + p[i][j] / p[j][j]).abs());
                }
            }
        }
    }
    vec![
        check("fit", errors == 0, format!("{errors} of 50 fits failed")),
        check("weights", worst < C3_TOL, format!("max |B − B_oracle| {worst:.2e} (< {C3_TOL:e})")),
        check("diagonal", diag_nonzero == 0, format!("{diag_nonzero} nonzero diagonal entries")),
    ]
}

fn c4_metrics() -> Vec<Check> {
    let mut r = rng(104);
    let (mut compared, mut mismatches) = (0, 0);
    for case in 0..200 {
        let n_items = r.gen_range(20..80);
        let n_users = r.gen_range(1..12);
        let mut pairs = Vec::new();
        for u in 0..n_users {
            for _ in 0..r.gen_range(0..8) {
                pairs.push((u, r.gen_range(0..n_items)));
            }
        }
        let test = InteractionMatrix::from_indices(n_users, n_items, pairs).unwrap();
        let lists: Vec<RankedList> = (0..n_users)
            .map(|u| {
                let mut items: Vec<usize> = (0..n_items).collect();
                items.shuffle(&mut r);
                items.truncate(r.gen_range(0..=20));
                RankedList { user: u, scores: vec![0.0; items.len()], items }
            })
            .collect();
        let k = [1, 5, 10, 20][case % 4];
        let report = metrics(&lists, &test, k, Segment::Overall, None).unwrap();
        for u in 0..n_users {
            let truth: Vec<usize> = test.row(u).iter().map(|&i| i as usize).collect();
            if truth.is_empty() {
                mismatches += usize::from(report.per_user.contains_key(&u));
                continue;
            }
            let (rec, ndcg) = brute_force_metrics(&lists[u].items, &truth, k);
            compared += 1;
            match report.per_user.get(&u) {
                Some(got) if got.recall == rec && got.ndcg == ndcg => {}
                _ => mismatches += 1,
            }
        }
    }
    vec![check("exact", mismatches == 0, format!("{compared} user results in 200 cases, {mismatches} mismatches"))]
}

/// Splits of `source` compared against the counting rule by integer
/// arithmetic: test `max(1, ⌊15n/100⌋)`, valid `max(1, ⌊15r/100⌋)` of the
/// remainder, none below 5 interactions.
fn c5_split_protocol() -> Vec<Check> {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data.tsv");
    write_planted(
        &data,
        &PlantedConfig { n_users: 10_000, n_items: 400, clusters: 5, p_in: 0.1, p_out: 0.003, popularity_skew: 0.8, seed: 105, ..Default::default() },
    );
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["split", "--input", s(&data), "--seed", "9", "--out", s(&a)]);
    ok(&["split", "--input", s(&data), "--seed", "9", "--out", s(&b)]);
    let c = tmp.path().join("c");
    ok(&["split", "--input", s(&data), "--seed", "10", "--out", s(&c)]);
    let same_manifest = fs::read(a.join("split.manifest.json")).unwrap() == fs::read(b.join("split.manifest.json")).unwrap();
    let manifest = SplitManifest::load(&a).unwrap();
    let reseeded = SplitManifest::load(&c).unwrap().digest != manifest.digest;
    let parts: Vec<InteractionMatrix> =
        [SplitPart::Train, SplitPart::Valid, SplitPart::Test].iter().map(|&p| manifest.read_split(&a, p).unwrap()).collect();
    let source = partsim::data::load_interactions(&data, &Default::default()).unwrap();

    // Per-user counts and placement, in original ids.
    let mut original: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (u, i) in source.entries() {
        original.entry(source.users().id(u)).or_default().push(source.items().id(i));
    }
    let (mut users, mut count_bad, mut leaks) = (0, 0, 0);
    for (uid, items) in &original {
        users += 1;
        let n = items.len();
        let (t, v) = if n < 5 {
            (0, 0)
        } else {
            let t = (15 * n / 100).max(1);
            (t, (15 * (n - t) / 100).max(1))
        };
        let counts: Vec<usize> = parts
            .iter()
            .map(|p| p.users().get(uid).map_or(0, |u| p.user_degree(u)))
            .collect();
        if counts != [n - t - v, v, t] {
            count_bad += 1;
        }
        for iid in items {
            let homes = parts
                .iter()
                .filter(|p| matches!((p.users().get(uid), p.items().get(iid)), (Some(u), Some(i)) if p.contains(u, i)))
                .count();
            if homes != 1 {
                leaks += 1;
            }
        }
    }
    let total: usize = parts.iter().map(|p| p.nnz()).sum();

    // Test data stays unread until evaluation.
    let blind = tmp.path().join("blind");
    fs::create_dir(&blind).unwrap();
    for f in ["split.manifest.json", "train.tsv", "valid.tsv"] {
        fs::copy(a.join(f), blind.join(f)).unwrap();
    }
    let fit = tmp.path().join("fit");
    let hpo = tmp.path().join("hpo");
    ok(&["fit", "--split", s(&blind), "--model", "fpsr+d", "--param", "global_rank=16", "--out", s(&fit)]);
    ok(&["hpo", "--split", s(&blind), "--model", "itemknn", "--budget", "3", "--out", s(&hpo)]);
    let bench = tmp.path().join("bench");
    ok(&["bench", "--split", s(&a), "--models", "mostpop,itemknn", "--out", s(&bench)]);
    let untouched = [&fit, &hpo].iter().all(|d| reads(d).iter().all(|(_, f)| f != "test.tsv"));
    let br = reads(&bench);
    let test_last = br.last() == Some(&("evaluate".to_owned(), "test.tsv".to_owned()))
        && br[..br.len() - 1].iter().all(|(stage, f)| stage == "fit" && f != "test.tsv");

    vec![
        check("counts", count_bad == 0 && users == 10_000, format!("{users} users, {count_bad} off the counting rule")),
        check("leakage", leaks == 0 && total == source.nnz(), format!("{leaks} interactions not in exactly one part, {total}/{} kept", source.nnz())),
        check(
            "determinism",
            same_manifest && reseeded,
            format!("same seed byte-identical manifests (digest {}), other seed differs: {reseeded}", &manifest.digest[..12]),
        ),
        check("test unread", untouched && test_last, "fit and hpo ran without test.tsv present; bench read it last, in stage evaluate"),
    ]
}

fn purity(p: &PartitionAssignment, labels: &[usize]) -> f64 {
    let mut majority = 0;
    for k in 0..p.sizes.len() {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for (i, &a) in p.assignment.iter().enumerate() {
            if a == k {
                *counts.entry(labels[i]).or_default() += 1;
            }
        }
        majority += counts.values().max().copied().unwrap_or(0);
    }
    majority as f64 / labels.len() as f64
}

fn intra_mass(model: &SimilarityModel, labels: &[usize]) -> f64 {
    let (mut intra, mut all) = (0.0, 0.0);
    for (i, j, v) in model.sparse.triples() {
        all += v.abs();
        if labels[i] == labels[j] {
            intra += v.abs();
        }
    }
    intra / all
}

fn c6_data() -> partsim::synth::PlantedData {
    planted(&PlantedConfig { n_users: 1000, n_items: 300, clusters: 3, p_in: 0.1, p_out: 0.005, seed: 106, ..Default::default() })
}

fn c6_planted() -> Vec<Check> {
    let start = Instant::now();
    let d = c6_data();
    let p = recursive_partition(&d.matrix, 0.34, &EigConfig::default()).unwrap();
    let pur = purity(&p, &d.item_cluster);
    let model = fpsr_fit(&d.matrix, &FpsrConfig { tau: 0.34, lambda: 0.0, ..Default::default() }).unwrap();
    let mass = intra_mass(&model, &d.item_cluster);
    let took = start.elapsed();
    vec![
        check("purity", pur >= C6_PURITY, format!("{pur:.4} over {} partitions (>= {C6_PURITY})", p.sizes.len())),
        check("mass", mass >= C6_MASS, format!("intra-cluster |S| share {mass:.4} (>= {C6_MASS})")),
        check("runtime", took < C6_BUDGET, format!("{:.1}s (< {}s)", took.as_secs_f64(), C6_BUDGET.as_secs())),
    ]
}

/// Relative Recall@20 drop on test from the validation-selected τ to 0.05.
fn tau_drop(family: Family, train: &InteractionMatrix, valid: &InteractionMatrix, test: &InteractionMatrix) -> (f64, f64) {
    let fixed = FpsrConfig { lambda: 0.3, local_l2: 30.0, global_rank: 32, hub_budget: 0.05, ..Default::default() };
    let grid = [0.1, 0.2, 0.3, 0.4, 0.5];
    let fits = sweep_fit(family, &grid, &fixed, train);
    let rows = sweep_score(family, &fits[..grid.len()], train, valid);
    let mut best = (grid[0], f64::NEG_INFINITY);
    for row in &rows {
        let v = row.recall.expect("grid fit succeeds");
        if v > best.1 {
            best = (row.tau, v);
        }
    }
    let fixed = FpsrConfig { tau: best.0, ..fixed };
    let rows = sweep_score(family, &sweep_fit(family, &[0.05], &fixed, train), train, test);
    let (low, top) = (rows[0].recall.unwrap(), rows[1].recall.unwrap());
    ((top - low) / top, best.0)
}

fn c7_tau_trend() -> Vec<Check> {
    let mut drops = [Vec::new(), Vec::new()];
    let mut detail = Vec::new();
    for seed in [1u64, 2, 3] {
        let d = planted(&PlantedConfig {
            n_users: 3000,
            n_items: 600,
            clusters: 12,
            p_in: 0.1,
            p_out: 0.003,
            popularity_skew: 1.0,
            seed: 700 + seed,
            ..Default::default()
        });
        let b = holdout_split(&d.matrix, &SplitConfig { seed, ..Default::default() }).unwrap();
        for (k, family) in [Family::Fpsr, Family::FpsrD].into_iter().enumerate() {
            let (drop, tau) = tau_drop(family, &b.train, &b.valid, &b.test);
            drops[k].push(drop);
            detail.push(format!("{}@seed{seed}: -{:.1}% from tau {tau}", family.as_str(), 100.0 * drop));
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (f, h) = (mean(&drops[0]), mean(&drops[1]));
    vec![check(
        "ratio",
        f >= C7_RATIO * h,
        format!("mean drop fpsr {:.2}% vs fpsr+d {:.2}% (ratio {:.2}, needs >= {C7_RATIO}); {}", 100.0 * f, 100.0 * h, f / h, detail.join(", ")),
    )]
}

/// (cross-partition nonzeros, those not touching a hub).
fn cross_audit(model: &SimilarityModel) -> (usize, usize) {
    let part = model.partition.as_ref().expect("partition-aware model");
    let hubs: std::collections::BTreeSet<usize> = part.hub_items.iter().copied().collect();
    let (mut cross, mut stray) = (0, 0);
    for (i, j, v) in model.sparse.triples() {
        if v != 0.0 && part.assignment[i] != part.assignment[j] {
            cross += 1;
            if !hubs.contains(&i) && !hubs.contains(&j) {
                stray += 1;
            }
        }
    }
    (cross, stray)
}

fn c8_hub_structure() -> Vec<Check> {
    let d = c6_data();
    let base = FpsrConfig { tau: 0.34, lambda: 0.0, ..Default::default() };
    let mut out = Vec::new();
    for cfg in [base.clone(), FpsrConfig { hub_strategy: partsim::fpsr::HubStrategy::Degree, ..base.clone() }, FpsrConfig { hub_strategy: partsim::fpsr::HubStrategy::Fiedler, ..base.clone() }] {
        let model = fpsr_fit(&d.matrix, &cfg).unwrap();
        let (cross, stray) = cross_audit(&model);
        let hubs = model.partition.as_ref().unwrap().hub_items.len();
        let strategy = cfg.hub_strategy.as_str();
        let (id, pass) = match strategy {
            "none" => ("none", cross == 0),
            "degree" => ("degree", stray == 0 && hubs > 0),
            _ => ("fiedler", stray == 0 && hubs > 0),
        };
        out.push(check(id, pass, format!("{} nonzeros, {cross} cross-partition, {stray} without a hub, {hubs} hubs", model.sparse.nnz())));
    }
    out
}

fn c9_bism() -> Vec<Check> {
    let mut r = rng(109);
    let mut violations = 0;
    let mut steps = 0;
    for _ in 0..20 {
        let m = random_matrix(&mut r, 20, 15, 0.25);
        let cfg = BismConfig { blocks: 3, alpha: 0.5, beta_l: 1.0, beta_g: 5.0, tol: 0.0, max_outer_iters: 8, ..Default::default() };
        let state = bism_solve(&m, &cfg).unwrap();
        for w in state.objective_trace.windows(2) {
            steps += 1;
            if w[1] > w[0] + C9_SLACK * w[0].abs() {
                violations += 1;
            }
        }
    }

    // α = 0, one step: per column the reduced ridge system without item j.
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let m = random_matrix(&mut r, 20, 15, 0.3);
        let beta = r.gen_range(0.5..10.0);
        let cfg = BismConfig { blocks: 2, alpha: 0.0, beta_l: beta, max_outer_iters: 1, ..Default::default() };
        let state = bism_solve(&m, &cfg).unwrap();
        let g = naive_gram(&m);
        for j in 0..15 {
            let others: Vec<usize> = (0..15).filter(|&i| i != j).collect();
            let a: Vec<Vec<f64>> = others
                .iter()
                .map(|&i| others.iter().map(|&k| g[i][k] + if i == k { beta } else { 0.0 }).collect())
                .collect();
            let inv = gauss_jordan_inverse(&a);
            for (x, &i) in others.iter().enumerate() {
                let want: f64 = others.iter().enumerate().map(|(y, &k)| inv[x][y] * g[k][j]).sum();
                worst = worst.max((state.s_l[(i, j)] - want).abs());
            }
            worst = worst.max(state.s_l[(j, j)].abs());
        }
    }

    let d = planted(&PlantedConfig { n_users: 300, n_items: 60, clusters: 3, p_in: 0.2, p_out: 0.02, seed: 13, ..Default::default() });
    let cfg = BismConfig { blocks: 3, alpha: 100.0, beta_l: 10.0, beta_g: 50.0, ..Default::default() };
    let state = bism_solve(&d.matrix, &cfg).unwrap();
    let (mut cross, mut all) = (0.0, 0.0);
    for i in 0..60 {
        for j in 0..60 {
            let v = state.s_l[(i, j)].abs();
            all += v;
            if d.item_cluster[i] != d.item_cluster[j] {
                cross += v;
            }
        }
    }
    let share = if all > 0.0 { cross / all } else { f64::NAN };
    vec![
        check("monotone", violations == 0, format!("{violations} rises in {steps} steps over 20 instances (slack {C9_SLACK:e})")),
        check("ridge", worst < C9_RIDGE_TOL, format!("alpha=0 max deviation from ridge oracle {worst:.2e} (< {C9_RIDGE_TOL:e})")),
        check("blocks", share < C9_CROSS_MASS, format!("cross-block |S^l| share {share:.4} with k=3 (< {C9_CROSS_MASS})")),
    ]
}

/// Recounts hits by segment for every model of a finished benchmark run and
/// compares them with the library's per-user hits and the CLI report.
fn decomposition_recount(split: &Path, bench: &Path, specs: &[(String, Params)], cutoffs: &[usize], head_fraction: f64, seed: u64) -> Vec<Check> {
    let manifest = SplitManifest::load(split).unwrap();
    let train = manifest.read_split(split, SplitPart::Train).unwrap();
    let test = manifest.read_split(split, SplitPart::Test).unwrap();
    let head = head_by_sort(&train, head_fraction);
    let segments = partsim::split::head_tail_partition(&train, head_fraction).unwrap();
    let users: Vec<usize> = (0..test.n_users()).filter(|&u| test.user_degree(u) > 0).collect();
    let report = read_json(&bench.join("report.json"));
    let rows = report["rows"].as_array().unwrap();
    let kmax = *cutoffs.iter().max().unwrap();
    let (mut pairs, mut bad_hits, mut bad_values) = (0usize, 0usize, 0usize);
    for (name, params) in specs {
        let model = partsim_cli::registry::fit(name, params, &train, seed).unwrap().model;
        let lists = recommend_topk(&model, &train, &users, kmax).unwrap();
        for &k in cutoffs {
            let lib: Vec<_> = [Segment::Overall, Segment::Head, Segment::Tail]
                .iter()
                .map(|&seg| metrics(&lists, &test, k, seg, (seg != Segment::Overall).then_some(&segments)).unwrap())
                .collect();
            let mut sums = [(0.0, 0usize); 3];
            for list in &lists {
                let truth: Vec<usize> = test.row(list.user).iter().map(|&i| i as usize).collect();
                let top = &list.items[..k.min(list.items.len())];
                let hit = |want_head: Option<bool>| {
                    top.iter().filter(|i| truth.contains(i) && want_head.map_or(true, |h| head[**i] == h)).count()
                };
                let (o, h, t) = (hit(None), hit(Some(true)), hit(Some(false)));
                pairs += 1;
                let got = |s: usize| lib[s].per_user.get(&list.user).map_or(0, |m| m.hits);
                if o != h + t || got(0) != o || got(1) != h || got(2) != t {
                    bad_hits += 1;
                }
                for (s, (hits, want_head)) in [(o, None), (h, Some(true)), (t, Some(false))].into_iter().enumerate() {
                    let rel = truth.iter().filter(|i| want_head.map_or(true, |w| head[**i] == w)).count();
                    if rel > 0 {
                        sums[s].0 += hits as f64 / rel as f64;
                        sums[s].1 += 1;
                    }
                }
            }
            for (s, seg) in ["overall", "head", "tail"].iter().enumerate() {
                let want = sums[s].0 / sums[s].1 as f64;
                let got = rows
                    .iter()
                    .find(|r| r["model"] == name.as_str() && r["segment"] == *seg && r["k"] == k && r["metric"] == "recall")
                    .and_then(|r| r["value"].as_f64());
                if got.map_or(true, |g| (g - want).abs() > C10_VALUE_TOL) {
                    bad_values += 1;
                }
            }
        }
    }
    let cli_audit = &report["audits"]["hit_decomposition"];
    vec![
        check("cli audit", cli_audit["passed"] == true, format!("bench audit checked {} user/cutoff pairs", cli_audit["checked"])),
        check("recount", bad_hits == 0, format!("{pairs} user/cutoff pairs over {} models, {bad_hits} off (overall = head + tail)", specs.len())),
        check("report", bad_values == 0, format!("{bad_values} reported recall values off the recount by > {C10_VALUE_TOL:e}")),
    ]
}

fn c10_decomposition() -> Vec<Check> {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data.tsv");
    write_planted(&data, &PlantedConfig { n_users: 1500, n_items: 300, clusters: 6, p_in: 0.08, popularity_skew: 1.0, seed: 110, ..Default::default() });
    let split = tmp.path().join("split");
    ok(&["split", "--input", s(&data), "--seed", "10", "--out", s(&split)]);
    let mut specs: Vec<(String, Params)> = partsim_cli::registry::MODELS.iter().map(|m| (m.to_string(), Params::new())).collect();
    for (name, params) in specs.iter_mut() {
        match name.as_str() {
            "bism" => {
                params.insert("blocks".into(), json!(6));
                params.insert("max_outer_iters".into(), json!(3));
            }
            n if n.starts_with("fpsr") || n == "gfcf" => {
                params.insert(if n == "gfcf" { "rank" } else { "global_rank" }.into(), json!(16));
            }
            _ => {}
        }
    }
    let mut toml = String::from("seed = 3\n[eval]\ncutoffs = [1, 5, 10, 20]\nhead_fraction = 0.1\n");
    for (name, params) in &specs {
        let p: Vec<String> = params.iter().map(|(k, v)| format!("{k} = {v}")).collect();
        toml.push_str(&format!("[[bench.models]]\nname = \"{name}\"\nparams = {{ {} }}\n", p.join(", ")));
    }
    let cfg = tmp.path().join("bench.toml");
    fs::write(&cfg, toml).unwrap();
    let bench = tmp.path().join("bench");
    ok(&["bench", "--config", s(&cfg), "--split", s(&split), "--out", s(&bench)]);
    decomposition_recount(&split, &bench, &specs, &[1, 5, 10, 20], 0.1, 3)
}

fn c11_gini() -> Vec<Check> {
    let mut exact_bad = Vec::new();
    for n in 1..=300usize {
        for c in [1usize, 7, 1000] {
            if gini(&vec![c; n]) != 0.0 {
                exact_bad.push(format!("uniform n={n} c={c}"));
            }
            let mut one = vec![0; n];
            one[n / 2] = c;
            let want = (n - 1) as f64 / n as f64;
            if gini(&one) != want || gini_pairwise(&one) != want {
                exact_bad.push(format!("single owner n={n} c={c}"));
            }
        }
    }
    let mut r = rng(111);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let counts: Vec<usize> = (0..r.gen_range(1..60)).map(|_| r.gen_range(0..100)).collect();
        worst = worst.max((gini(&counts) - gini_pairwise(&counts)).abs());
    }
    vec![
        check("exact", exact_bad.is_empty(), format!("uniform → 0 and single owner → (n−1)/n for n ≤ 300: {} misses {:?}", exact_bad.len(), exact_bad.iter().take(3).collect::<Vec<_>>())),
        check("pairwise", worst < 1e-12, format!("max gap to the pairwise-difference formula {worst:.1e} on 200 random counts")),
    ]
}

fn load_model(path: &Path) -> Model {
    Model::read(std::io::BufReader::new(fs::File::open(path).unwrap())).unwrap()
}

fn c12_end_to_end() -> Vec<Check> {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let p = |name: &str| tmp.path().join(name);
    let weights: Vec<f64> = (1..=20).map(|k| 1.0 / k as f64).collect();
    write_planted(
        &p("data.tsv"),
        &PlantedConfig {
            n_users: 8000,
            n_items: 1000,
            clusters: 20,
            cluster_weights: Some(weights),
            p_in: 0.1,
            p_out: 0.001,
            popularity_skew: 0.8,
            seed: 112,
            ..Default::default()
        },
    );
    let fpsr = "tau = 0.2, lambda = 0.3, global_rank = 32, local_l2 = 30.0";
    let models: Vec<(&str, String)> = vec![
        ("fpsr", fpsr.into()),
        ("fpsr+d", fpsr.into()),
        ("fpsr+f", fpsr.into()),
        ("bism", "blocks = 20, max_outer_iters = 3".into()),
        ("itemknn", String::new()),
        ("ease", String::new()),
    ];
    let mut toml = String::from(
        "seed = 2024\n[data]\nname = \"planted-100k\"\n[eval]\ncutoffs = [10, 20]\nhead_fraction = 0.1\nbaseline = \"itemknn\"\n\
         [sweep]\nfamily = \"fpsr\"\ntaus = [0.05, 0.1, 0.15, 0.25]\n",
    );
    for (name, params) in &models {
        toml.push_str(&format!("[[bench.models]]\nname = \"{name}\"\nparams = {{ {params} }}\n"));
    }
    fs::write(p("run.toml"), &toml).unwrap();
    let config = s(&p("run.toml")).to_owned();
    let run = |args: &[&str]| {
        let mut full = vec!["--config", config.as_str()];
        full.extend_from_slice(args);
        ok(&full);
    };

    run(&["stats", "--input", s(&p("data.tsv")), "--out", s(&p("stats"))]);
    run(&["split", "--input", s(&p("data.tsv")), "--out", s(&p("split"))]);
    let split = p("split");
    let cfg: toml::Value = toml::from_str(&toml).unwrap();
    let spec_params = |i: usize| -> Params {
        let v = &cfg["bench"]["models"][i]["params"];
        serde_json::from_value(serde_json::to_value(v).unwrap()).unwrap()
    };
    for (i, (name, _)) in models.iter().enumerate() {
        let mut args = vec!["fit".to_owned(), "--split".into(), s(&split).into(), "--model".into(), name.to_string()];
        for (k, v) in spec_params(i) {
            args.push("--param".into());
            args.push(format!("{k}={v}"));
        }
        args.push("--out".into());
        args.push(s(&p(&format!("fit-{name}"))).into());
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        run(&refs);
    }
    run(&["bench", "--split", s(&split), "--out", s(&p("bench"))]);
    run(&["sweep", "--split", s(&split), "--param", "lambda=0.3", "--param", "global_rank=32", "--param", "local_l2=30", "--out", s(&p("sweep"))]);
    let took = start.elapsed();

    let stats = read_json(&p("stats/stats.json"));
    let interactions = stats["interactions"].as_u64().unwrap();
    let manifest = SplitManifest::load(&split).unwrap();
    let train = manifest.read_split(&split, SplitPart::Train).unwrap();
    let test = manifest.read_split(&split, SplitPart::Test).unwrap();
    let n = train.n_items();
    let report = read_json(&p("bench/report.json"));
    let rows = report["rows"].as_array().unwrap();

    // Audit 1: partition bound on every fitted FPSR model and sweep point.
    let mut bound_bad = 0;
    for name in ["fpsr", "fpsr+d", "fpsr+f"] {
        let m = load_model(&p(&format!("fit-{name}/model.bin")));
        let part = m.as_similarity().unwrap().partition.clone().unwrap();
        let bound = bound_twentieths(4, n);
        let pa = PartitionAssignment { tau: part.tau, assignment: part.assignment, sizes: part.sizes, cold: part.cold, split_trace: Vec::new() };
        bound_bad += partition_violations(&pa, n, bound).len();
    }
    let sweep = read_json(&p("sweep/sweep.json"));
    for fp in sweep["footprints"].as_array().unwrap() {
        let tau = fp["tau"].as_f64().unwrap();
        let k20 = (tau * 20.0).round() as usize;
        if fp["max_partition"].as_u64().map_or(true, |m| m as usize > bound_twentieths(k20, n)) {
            bound_bad += 1;
        }
    }

    // Audit 4: reported Recall/nDCG against brute force on the fitted files,
    // after checking bench refit the same models.
    let users: Vec<usize> = (0..test.n_users()).filter(|&u| test.user_degree(u) > 0).collect();
    let (mut metric_bad, mut digest_bad) = (0, 0);
    for (i, (name, _)) in models.iter().enumerate() {
        let path = p(&format!("fit-{name}/model.bin"));
        let model = load_model(&path);
        if report["models"][i]["digest"] != model.digest().as_str() {
            digest_bad += 1;
        }
        let lists = recommend_topk(&model, &train, &users, 20).unwrap();
        for k in [10, 20] {
            let (mut rec, mut nd) = (0.0, 0.0);
            for list in &lists {
                let truth: Vec<usize> = test.row(list.user).iter().map(|&i| i as usize).collect();
                let (a, b) = brute_force_metrics(&list.items, &truth, k);
                rec += a;
                nd += b;
            }
            for (metric, want) in [("recall", rec / lists.len() as f64), ("ndcg", nd / lists.len() as f64)] {
                let got = rows
                    .iter()
                    .find(|r| r["model"] == *name && r["segment"] == "overall" && r["k"] == k && r["metric"] == metric)
                    .and_then(|r| r["value"].as_f64());
                if got.map_or(true, |g| (g - want).abs() > C10_VALUE_TOL) {
                    metric_bad += 1;
                }
            }
        }
    }

    // Audit 5: split audit and stage-ordered reads in every manifest.
    let split_audit = read_json(&p("split/run.manifest.json"))["audits"]["split"]["passed"] == true;
    let fits_blind = models.iter().all(|(name, _)| reads(&p(&format!("fit-{name}"))).iter().all(|(_, f)| f != "test.tsv"));
    let ordered = ["bench", "sweep"].iter().all(|d| {
        let r = reads(&p(d));
        r.last() == Some(&("evaluate".to_owned(), "test.tsv".to_owned())) && r[..r.len() - 1].iter().all(|(_, f)| f != "test.tsv")
    });

    // Audit 8: hub structure of the three FPSR fits.
    let mut hub_bad = Vec::new();
    for name in ["fpsr", "fpsr+d", "fpsr+f"] {
        let m = load_model(&p(&format!("fit-{name}/model.bin")));
        let (cross, stray) = cross_audit(m.as_similarity().unwrap());
        if (name == "fpsr" && cross != 0) || stray != 0 {
            hub_bad.push(format!("{name}: {cross} cross, {stray} stray"));
        }
    }

    // Stars: exactly the non-baseline rows with p < 0.05.
    let star_bad = rows
        .iter()
        .filter(|r| r["significant"] != r["p_value_vs_baseline"].as_f64().is_some_and(|p| p < 0.05))
        .count();
    let stars = fs::read_to_string(p("bench/table.csv")).unwrap().matches('*').count();

    // Audit 10: per-user decomposition, recounted.
    let specs: Vec<(String, Params)> = models.iter().enumerate().map(|(i, (n, _))| (n.to_string(), spec_params(i))).collect();
    let decomposition = decomposition_recount(&split, &p("bench"), &specs, &[10, 20], 0.1, 2024);
    let decomposition_ok = decomposition.iter().all(|c| c.pass);

    // Block cost at τ = 0.1.
    let at = sweep["footprints"].as_array().unwrap().iter().find(|f| f["tau"] == 0.1).cloned().unwrap_or(Value::Null);
    let fraction = at["block_cost_fraction"].as_f64().unwrap_or(f64::NAN);

    vec![
        check("pipeline", true, format!("stats, split, 6 fits, bench, sweep on {interactions} interactions ({} users, {n} items)", stats["users"])),
        check("size", (90_000..=120_000).contains(&interactions), format!("{interactions} interactions (about 100k)")),
        check("runtime", took < C12_BUDGET, format!("{:.1}s (< {}s)", took.as_secs_f64(), C12_BUDGET.as_secs())),
        check("audit 1", bound_bad == 0, format!("{bound_bad} partition-bound violations in fits and sweep")),
        check("audit 4", metric_bad == 0 && digest_bad == 0, format!("{metric_bad} overall values off brute force, {digest_bad} refit digests differ")),
        check("audit 5", split_audit && fits_blind && ordered, "split audit passed; fits never read test; bench and sweep read it last"),
        check("audit 8", hub_bad.is_empty(), format!("hub structure {}", if hub_bad.is_empty() { "clean".to_owned() } else { hub_bad.join("; ") })),
        check("audit 10", decomposition_ok, decomposition.iter().map(|c| c.detail.clone()).collect::<Vec<_>>().join("; ")),
        check("stars", star_bad == 0, format!("{stars} starred cells, {star_bad} rows disagree with p < 0.05")),
        check("block_cost", fraction < C12_BLOCK_FRACTION, format!(
            "sum M_k^2 at tau=0.1 is {:.2}% of N^2 with {} partitions, max {} (needs < {}%)",
            100.0 * fraction, at["k"], at["max_partition"], 100.0 * C12_BLOCK_FRACTION
        )),
    ]
}
