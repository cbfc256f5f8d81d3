use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use partsim::data::{compute_stats, load_interactions};
use partsim::eval::{
    metrics, paired_significance, recommend_topk, write_report_csv, Metric, MetricReport, RankedList, ReportRow,
    Segment,
};
use partsim::fpsr::model_footprint;
use partsim::hpo::{default_space, search, sweep_fit, sweep_score, write_sweep_csv, Family, SearchSpace};
use partsim::model::Params;
use partsim::split::{head_tail_partition, holdout_split, ItemSegments, SplitBundle, SplitPart, MANIFEST_FILE};
use partsim::split::{TEST_FILE, TRAIN_FILE, VALID_FILE};
use partsim::{InteractionMatrix, Model, Recommender};
use serde::Serialize;
use serde_json::{json, Value};

use crate::access::{SplitAccess, Stage};
use crate::args::*;
use crate::config::{parse_objective, parse_param, ModelSpec, RunConfig, Target};
use crate::error::{CliError, Result};
use crate::manifest::{FileRecord, OutDir, RunManifest};
use crate::registry;

pub const STATS_FILE: &str = "stats.json";
pub const MODEL_FILE: &str = "model.bin";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_JSON: &str = "report.json";
pub const TABLE_CSV: &str = "table.csv";
pub const TABLE_MD: &str = "table.md";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_JSON: &str = "sweep.json";
pub const TRIALS_FILE: &str = "trials.jsonl";
pub const BEST_FILE: &str = "best.json";

/// p-value below which a result earns a star.
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

struct Ctx {
    cfg: RunConfig,
    inputs: Vec<FileRecord>,
    out: PathBuf,
    audits: BTreeMap<String, Value>,
}

impl Ctx {
    fn open_out(&self) -> Result<OutDir> {
        OutDir::create(&self.out)
    }

    fn finish(self, command: &str, out: OutDir, access: Option<&SplitAccess>) -> Result<()> {
        let mut m = RunManifest::new(command, &self.cfg);
        m.inputs = self.inputs;
        m.audits = self.audits;
        if let Some(a) = access {
            m.files_read = a.events().to_vec();
        }
        out.finish(m)
    }

    fn open_split(&mut self, dir: &Path) -> Result<SplitAccess> {
        let access = SplitAccess::open(dir)?;
        self.inputs.push(FileRecord::of(&dir.join(MANIFEST_FILE))?);
        Ok(access)
    }

    fn dataset_label(&self, split_dir: &Path) -> String {
        self.cfg.data.name.clone().unwrap_or_else(|| {
            split_dir
                .canonicalize()
                .ok()
                .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
                .unwrap_or_else(|| "dataset".into())
        })
    }
}

pub fn dispatch(cli: Cli) -> Result<()> {
    let mut inputs = Vec::new();
    let mut cfg = match &cli.config {
        Some(p) => {
            let cfg = RunConfig::load(p)?;
            inputs.push(FileRecord::of(p)?);
            cfg
        }
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = Some(w);
    }
    if let Some(w) = cfg.workers {
        if w == 0 {
            return Err(CliError::usage("--workers must be at least 1"));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w).build_global() {
            log::warn!("worker pool already set up: {e}");
        }
    }
    let out = cli.out.ok_or_else(|| CliError::usage("--out DIR is required"))?;
    let ctx = Ctx {
        cfg,
        inputs,
        out,
        audits: BTreeMap::new(),
    };
    match cli.command {
        Command::Stats(a) => stats(ctx, &a),
        Command::Split(a) => split(ctx, &a),
        Command::Fit(a) => fit(ctx, &a),
        Command::Eval(a) => eval(ctx, &a),
        Command::Bench(a) => bench(ctx, &a),
        Command::Sweep(a) => sweep(ctx, &a),
        Command::Hpo(a) => hpo(ctx, &a),
    }
}

fn apply_data_args(cfg: &mut RunConfig, a: &DataArgs) {
    let d = &mut cfg.data;
    if let Some(p) = &a.input {
        d.path = Some(p.clone());
    }
    if let Some(x) = a.delimiter {
        d.format.delimiter = x.into();
    }
    if let Some(x) = a.user_col {
        d.format.user_col = x;
    }
    if let Some(x) = a.item_col {
        d.format.item_col = x;
    }
    if a.rating_col.is_some() {
        d.format.rating_col = a.rating_col;
    }
    if a.min_rating.is_some() {
        d.format.min_rating = a.min_rating;
    }
    if a.header {
        d.format.header = true;
    }
}

fn load_data(ctx: &mut Ctx) -> Result<InteractionMatrix> {
    let path = ctx
        .cfg
        .data
        .path
        .clone()
        .ok_or_else(|| CliError::usage("no input file: pass --input or set data.path"))?;
    if !path.is_file() {
        return Err(CliError::usage(format!("input file not found: {}", path.display())));
    }
    ctx.inputs.push(FileRecord::of(&path)?);
    load_interactions(&path, &ctx.cfg.data.format).map_err(CliError::runtime)
}

fn stats(mut ctx: Ctx, a: &DataArgs) -> Result<()> {
    apply_data_args(&mut ctx.cfg, a);
    let m = load_data(&mut ctx)?;
    let stats = compute_stats(&m).map_err(CliError::runtime)?;
    let mut out = ctx.open_out()?;
    out.write_json(STATS_FILE, &stats)?;
    ctx.finish("stats", out, None)
}

/// Recounts a split against its source: every interaction lands in exactly
/// one part and the per-user counts follow the configured rule.
pub fn split_audit(source: &InteractionMatrix, b: &SplitBundle) -> Value {
    let (mut leaks, mut count_errors) = (0usize, 0usize);
    for u in 0..source.n_users() {
        for &i in source.row(u) {
            let i = i as usize;
            let places = [b.train.contains(u, i), b.valid.contains(u, i), b.test.contains(u, i)];
            if places.iter().filter(|&&p| p).count() != 1 {
                leaks += 1;
            }
        }
        let (t, v) = b.config.holdout_counts(source.user_degree(u));
        let n = source.user_degree(u);
        if b.test.user_degree(u) != t || b.valid.user_degree(u) != v || b.train.user_degree(u) != n - t - v {
            count_errors += 1;
        }
    }
    let extra = [&b.train, &b.valid, &b.test]
        .iter()
        .flat_map(|m| m.entries())
        .filter(|&(u, i)| u >= source.n_users() || i >= source.n_items() || !source.contains(u, i))
        .count();
    json!({
        "users": source.n_users(),
        "misplaced_interactions": leaks + extra,
        "count_rule_violations": count_errors,
        "passed": leaks + extra == 0 && count_errors == 0,
    })
}

fn split(mut ctx: Ctx, a: &SplitArgs) -> Result<()> {
    apply_data_args(&mut ctx.cfg, &a.data);
    let s = &mut ctx.cfg.split;
    if let Some(x) = a.test_fraction {
        s.test_fraction = x;
    }
    if let Some(x) = a.valid_fraction {
        s.valid_fraction = x;
    }
    if let Some(x) = a.min_user_interactions {
        s.min_user_interactions = x;
    }
    let scfg = ctx.cfg.split.with_seed(ctx.cfg.seed);
    scfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let m = load_data(&mut ctx)?;
    let bundle = holdout_split(&m, &scfg).map_err(CliError::runtime)?;
    let audit = split_audit(&m, &bundle);
    let passed = audit["passed"] == json!(true);
    ctx.audits.insert("split".into(), audit);
    let mut out = ctx.open_out()?;
    bundle.save(out.path()).map_err(CliError::runtime)?;
    for f in [TRAIN_FILE, VALID_FILE, TEST_FILE, MANIFEST_FILE] {
        out.record(f)?;
    }
    ctx.finish("split", out, None)?;
    if !passed {
        return Err(CliError::runtime("split audit failed; see run.manifest.json"));
    }
    Ok(())
}

/// Resolves the model name and parameters of `fit`/`hpo`, writing the
/// effective values back into the config.
fn resolve_model(cfg: &mut RunConfig, a: &ModelArgs) -> Result<(String, Params)> {
    let name = match &a.model {
        Some(n) => n.clone(),
        None if !cfg.model.name.is_empty() => cfg.model.name.clone(),
        None => return Err(CliError::usage("no model: pass --model or set model.name")),
    };
    registry::check_name(&name)?;
    let mut params = if cfg.model.name == name || cfg.model.name.is_empty() {
        cfg.model.params.clone()
    } else {
        Params::new()
    };
    for raw in &a.params {
        let (k, v) = parse_param(raw)?;
        params.insert(k, v);
    }
    cfg.model = ModelSpec {
        name: name.clone(),
        params: params.clone(),
    };
    Ok((name, params))
}

fn fit(mut ctx: Ctx, a: &FitArgs) -> Result<()> {
    let (name, params) = resolve_model(&mut ctx.cfg, &a.model)?;
    let mut access = ctx.open_split(&a.split)?;
    let train = access.read(SplitPart::Train)?;
    let fitted = registry::fit(&name, &params, &train, ctx.cfg.seed)?;
    let mut diagnostics = fitted.diagnostics;
    diagnostics["split_digest"] = json!(access.manifest().digest);
    let mut out = ctx.open_out()?;
    out.write(MODEL_FILE, &fitted.model.to_bytes())?;
    out.write_json(DIAGNOSTICS_FILE, &diagnostics)?;
    ctx.finish("fit", out, Some(&access))
}

fn apply_report_args(cfg: &mut RunConfig, a: &ReportArgs) -> Result<()> {
    if let Some(c) = &a.cutoffs {
        cfg.eval.cutoffs = c.clone();
    }
    if a.head_fraction.is_some() {
        cfg.eval.head_fraction = a.head_fraction;
    }
    if let Some(t) = a.target {
        cfg.eval.target = t;
    }
    if a.dataset.is_some() {
        cfg.data.name = a.dataset.clone();
    }
    let e = &mut cfg.eval;
    if e.cutoffs.is_empty() || e.cutoffs.contains(&0) {
        return Err(CliError::usage("cutoffs must be a non-empty list of positive integers"));
    }
    e.cutoffs.sort_unstable();
    e.cutoffs.dedup();
    if let Some(h) = e.head_fraction {
        if !(h > 0.0 && h < 1.0) {
            return Err(CliError::usage(format!("head_fraction must lie in (0, 1), got {h}")));
        }
    }
    Ok(())
}

/// Opens the configured target part, moving to the stage it needs.
fn read_target(access: &mut SplitAccess, target: Target) -> Result<InteractionMatrix> {
    match target {
        Target::Test => {
            access.advance(Stage::Evaluate)?;
            access.read(SplitPart::Test)
        }
        Target::Valid => {
            access.advance(Stage::Select)?;
            access.read(SplitPart::Valid)
        }
    }
}

fn segments_of(train: &InteractionMatrix, head_fraction: Option<f64>) -> Result<Option<ItemSegments>> {
    head_fraction
        .map(|h| head_tail_partition(train, h).map_err(CliError::runtime))
        .transpose()
}

fn target_users(target: &InteractionMatrix) -> Vec<usize> {
    (0..target.n_users()).filter(|&u| target.user_degree(u) > 0).collect()
}

/// Metric reports in segment-major, then cutoff order.
fn score_lists(
    lists: &[RankedList],
    target: &InteractionMatrix,
    cutoffs: &[usize],
    segments: Option<&ItemSegments>,
) -> Result<Vec<MetricReport>> {
    let blocks: &[Segment] = if segments.is_some() {
        &[Segment::Head, Segment::Overall, Segment::Tail]
    } else {
        &[Segment::Overall]
    };
    let mut out = Vec::new();
    for &seg in blocks {
        for &k in cutoffs {
            let segs = if seg == Segment::Overall { None } else { segments };
            out.push(metrics(lists, target, k, seg, segs).map_err(CliError::runtime)?);
        }
    }
    Ok(out)
}

/// Checks overall hits = head hits + tail hits for every user and cutoff.
pub fn decomposition_audit(reports: &[MetricReport]) -> Value {
    let (mut checked, mut violations) = (0usize, 0usize);
    let find = |seg: Segment, k: usize| reports.iter().find(|r| r.segment == seg && r.k == k);
    for overall in reports.iter().filter(|r| r.segment == Segment::Overall) {
        let (Some(head), Some(tail)) = (find(Segment::Head, overall.k), find(Segment::Tail, overall.k)) else {
            continue;
        };
        for (u, m) in &overall.per_user {
            let h = head.per_user.get(u).map_or(0, |x| x.hits);
            let t = tail.per_user.get(u).map_or(0, |x| x.hits);
            checked += 1;
            if m.hits != h + t {
                violations += 1;
            }
        }
        // Segment users without an overall entry would be hits from nowhere.
        for r in [head, tail] {
            violations += r.per_user.keys().filter(|u| !overall.per_user.contains_key(u)).count();
        }
    }
    json!({ "checked": checked, "violations": violations, "passed": violations == 0 })
}

fn report_rows(model: &str, dataset: &str, reports: &[MetricReport]) -> Vec<ReportRow> {
    reports
        .iter()
        .flat_map(|r| {
            [Metric::Recall, Metric::Ndcg].map(|metric| ReportRow {
                model: model.to_owned(),
                dataset: dataset.to_owned(),
                segment: r.segment,
                k: r.k,
                metric,
                value: r.value(metric),
                p_value_vs_baseline: None,
            })
        })
        .collect()
}

fn csv_bytes(rows: &[ReportRow]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_report_csv(rows, &mut buf).map_err(CliError::runtime)?;
    Ok(buf)
}

fn eval(mut ctx: Ctx, a: &EvalArgs) -> Result<()> {
    apply_report_args(&mut ctx.cfg, &a.report)?;
    if !a.model_file.is_file() {
        return Err(CliError::usage(format!("model file not found: {}", a.model_file.display())));
    }
    ctx.inputs.push(FileRecord::of(&a.model_file)?);
    let file = std::fs::File::open(&a.model_file).map_err(CliError::runtime)?;
    let model = Model::read(std::io::BufReader::new(file)).map_err(CliError::runtime)?;
    let dataset = ctx.dataset_label(&a.split);
    let mut access = ctx.open_split(&a.split)?;
    let train = access.read(SplitPart::Train)?;
    if model.n_items() != train.n_items() {
        return Err(CliError::runtime(format!(
            "model covers {} items but the split has {}",
            model.n_items(),
            train.n_items()
        )));
    }
    let segments = segments_of(&train, ctx.cfg.eval.head_fraction)?;
    let target = read_target(&mut access, ctx.cfg.eval.target)?;
    let users = target_users(&target);
    let kmax = *ctx.cfg.eval.cutoffs.last().expect("validated non-empty");
    let lists = recommend_topk(&model, &train, &users, kmax).map_err(CliError::runtime)?;
    let reports = score_lists(&lists, &target, &ctx.cfg.eval.cutoffs, segments.as_ref())?;
    let audit = decomposition_audit(&reports);
    let passed = audit["passed"] == json!(true);
    ctx.audits.insert("hit_decomposition".into(), audit.clone());
    let rows = report_rows(model.name(), &dataset, &reports);
    let mut out = ctx.open_out()?;
    out.write(REPORT_CSV, &csv_bytes(&rows)?)?;
    out.write_json(
        REPORT_JSON,
        &json!({
            "dataset": dataset,
            "model": model.name(),
            "model_digest": model.digest(),
            "target": ctx.cfg.eval.target,
            "users": users.len(),
            "rows": rows,
            "audits": { "hit_decomposition": audit },
        }),
    )?;
    ctx.finish("eval", out, Some(&access))?;
    if !passed {
        return Err(CliError::runtime("hit decomposition audit failed; see report.json"));
    }
    Ok(())
}

/// A report row with its position among all models in its column.
#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    #[serde(flatten)]
    pub row: ReportRow,
    /// `best` or `second` within the (segment, K, metric) column.
    pub flag: Option<&'static str>,
    pub significant: bool,
}

/// Marks the best and second-best distinct values of each column. Ties
/// share a flag.
pub fn rank_flags(rows: &[ReportRow]) -> Vec<Option<&'static str>> {
    let key = |r: &ReportRow| (r.segment, r.k, r.metric);
    let mut columns: BTreeMap<_, Vec<f64>> = BTreeMap::new();
    for r in rows {
        columns.entry(key(r)).or_default().push(r.value);
    }
    let tops: BTreeMap<_, (f64, Option<f64>)> = columns
        .into_iter()
        .map(|(k, mut v)| {
            v.sort_by(|a, b| b.total_cmp(a));
            v.dedup();
            (k, (v[0], v.get(1).copied()))
        })
        .collect();
    rows.iter()
        .map(|r| {
            let (best, second) = tops[&key(r)];
            if r.value == best {
                Some("best")
            } else if Some(r.value) == second {
                Some("second")
            } else {
                None
            }
        })
        .collect()
}

fn column_label(seg: Segment, metric: Metric, k: usize) -> String {
    format!("{seg} {}@{k}", metric.as_str())
}

fn cell(r: &BenchRow) -> String {
    let star = if r.significant { "*" } else { "" };
    format!("{:.4}{star}", r.row.value)
}

/// Wide Table-3 layout: one line per model, one column per
/// (segment, metric, K).
fn wide_tables(models: &[String], rows: &[BenchRow]) -> Result<(Vec<u8>, String)> {
    let mut columns: Vec<(Segment, usize, Metric)> = Vec::new();
    for r in rows {
        let c = (r.row.segment, r.row.k, r.row.metric);
        if !columns.contains(&c) {
            columns.push(c);
        }
    }
    let labels: Vec<String> = columns.iter().map(|&(s, k, m)| column_label(s, m, k)).collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["model".to_owned()];
    header.extend(labels.iter().cloned());
    w.write_record(&header).map_err(CliError::runtime)?;
    let mut md = format!("| model | {} |\n|---|{}\n", labels.join(" | "), "---|".repeat(labels.len()));
    for name in models {
        let mut rec = vec![name.clone()];
        let mut md_cells = Vec::new();
        for &(s, k, m) in &columns {
            let r = rows
                .iter()
                .find(|r| &r.row.model == name && r.row.segment == s && r.row.k == k && r.row.metric == m)
                .expect("every model has every column");
            rec.push(cell(r));
            md_cells.push(match r.flag {
                Some("best") => format!("**{}**", cell(r)),
                Some(_) => format!("<u>{}</u>", cell(r)),
                None => cell(r),
            });
        }
        w.write_record(&rec).map_err(CliError::runtime)?;
        md.push_str(&format!("| {name} | {} |\n", md_cells.join(" | ")));
    }
    let csv = w.into_inner().map_err(|e| CliError::runtime(e.to_string()))?;
    Ok((csv, md))
}

fn bench(mut ctx: Ctx, a: &BenchArgs) -> Result<()> {
    apply_report_args(&mut ctx.cfg, &a.report)?;
    let specs: Vec<ModelSpec> = match &a.models {
        Some(names) => names
            .iter()
            .map(|n| {
                ctx.cfg.bench.models.iter().find(|s| &s.name == n).cloned().unwrap_or(ModelSpec {
                    name: n.clone(),
                    params: Params::new(),
                })
            })
            .collect(),
        None => ctx.cfg.bench.models.clone(),
    };
    if specs.is_empty() {
        return Err(CliError::usage("no models to benchmark: pass --models or list [[bench.models]]"));
    }
    let mut seen = BTreeSet::new();
    for s in &specs {
        registry::check_name(&s.name)?;
        if !seen.insert(s.name.clone()) {
            return Err(CliError::usage(format!("model `{}` listed twice", s.name)));
        }
    }
    let baseline = a
        .baseline
        .clone()
        .or_else(|| ctx.cfg.eval.baseline.clone())
        .unwrap_or_else(|| specs[0].name.clone());
    if !seen.contains(&baseline) {
        return Err(CliError::usage(format!("baseline `{baseline}` is not among the benchmarked models")));
    }
    ctx.cfg.bench.models = specs.clone();
    ctx.cfg.eval.baseline = Some(baseline.clone());
    let dataset = ctx.dataset_label(&a.split);

    let mut access = ctx.open_split(&a.split)?;
    let train = access.read(SplitPart::Train)?;
    let mut fitted = Vec::with_capacity(specs.len());
    for s in &specs {
        log::info!("fitting {}", s.name);
        fitted.push(registry::fit(&s.name, &s.params, &train, ctx.cfg.seed)?);
    }
    let segments = segments_of(&train, ctx.cfg.eval.head_fraction)?;

    let target = read_target(&mut access, ctx.cfg.eval.target)?;
    let users = target_users(&target);
    let kmax = *ctx.cfg.eval.cutoffs.last().expect("validated non-empty");
    let mut all_reports = Vec::with_capacity(specs.len());
    let mut audit_checked = 0u64;
    let mut audit_violations = 0u64;
    for f in &fitted {
        let lists = recommend_topk(&f.model, &train, &users, kmax).map_err(CliError::runtime)?;
        let reports = score_lists(&lists, &target, &ctx.cfg.eval.cutoffs, segments.as_ref())?;
        let audit = decomposition_audit(&reports);
        audit_checked += audit["checked"].as_u64().unwrap_or(0);
        audit_violations += audit["violations"].as_u64().unwrap_or(0);
        all_reports.push(reports);
    }
    let base_idx = specs.iter().position(|s| s.name == baseline).expect("checked above");
    let mut rows = Vec::new();
    for (s, reports) in specs.iter().zip(&all_reports) {
        for (r, base) in reports.iter().zip(&all_reports[base_idx]) {
            for metric in [Metric::Recall, Metric::Ndcg] {
                let p = if s.name == baseline {
                    None
                } else {
                    let (x, y) = (r.per_user_values(metric), base.per_user_values(metric));
                    Some(paired_significance(&x, &y).map_err(CliError::runtime)?)
                };
                rows.push(ReportRow {
                    model: s.name.clone(),
                    dataset: dataset.clone(),
                    segment: r.segment,
                    k: r.k,
                    metric,
                    value: r.value(metric),
                    p_value_vs_baseline: p,
                });
            }
        }
    }
    let flags = rank_flags(&rows);
    let bench_rows: Vec<BenchRow> = rows
        .iter()
        .zip(flags)
        .map(|(r, flag)| BenchRow {
            row: r.clone(),
            flag,
            significant: r.p_value_vs_baseline.is_some_and(|p| p < SIGNIFICANCE_LEVEL),
        })
        .collect();
    let names: Vec<String> = specs.iter().map(|s| s.name.clone()).collect();
    let (table_csv, table_md) = wide_tables(&names, &bench_rows)?;
    let audit = json!({
        "checked": audit_checked,
        "violations": audit_violations,
        "passed": audit_violations == 0,
    });
    ctx.audits.insert("hit_decomposition".into(), audit.clone());
    let models: Vec<Value> = fitted.iter().map(|f| f.diagnostics.clone()).collect();
    let mut out = ctx.open_out()?;
    out.write(REPORT_CSV, &csv_bytes(&rows)?)?;
    out.write(TABLE_CSV, &table_csv)?;
    out.write(TABLE_MD, table_md.as_bytes())?;
    out.write_json(
        REPORT_JSON,
        &json!({
            "dataset": dataset,
            "baseline": baseline,
            "target": ctx.cfg.eval.target,
            "users": users.len(),
            "significance_level": SIGNIFICANCE_LEVEL,
            "rows": bench_rows,
            "models": models,
            "audits": { "hit_decomposition": audit },
        }),
    )?;
    ctx.finish("bench", out, Some(&access))?;
    if audit_violations > 0 {
        return Err(CliError::runtime("hit decomposition audit failed; see report.json"));
    }
    Ok(())
}

fn sweep(mut ctx: Ctx, a: &SweepArgs) -> Result<()> {
    let family_name = a
        .family
        .clone()
        .or_else(|| ctx.cfg.sweep.family.clone())
        .ok_or_else(|| CliError::usage("no family: pass --family or set sweep.family"))?;
    let family = Family::parse(&family_name)
        .ok_or_else(|| CliError::usage(format!("`{family_name}` is not one of fpsr, fpsr+d, fpsr+f")))?;
    if let Some(t) = &a.taus {
        ctx.cfg.sweep.taus = t.clone();
    }
    if a.tau_best.is_some() {
        ctx.cfg.sweep.tau_best = a.tau_best;
    }
    if let Some(t) = a.target {
        ctx.cfg.sweep.target = t;
    }
    let sw = &ctx.cfg.sweep;
    if sw.taus.is_empty() {
        return Err(CliError::usage("the τ grid is empty"));
    }
    for &t in sw.taus.iter().chain(sw.tau_best.iter()) {
        if !(t > 0.0 && t <= 1.0) {
            return Err(CliError::usage(format!("τ must lie in (0, 1], got {t}")));
        }
    }
    let mut params = if ctx.cfg.model.name == family.as_str() || ctx.cfg.model.name.is_empty() {
        ctx.cfg.model.params.clone()
    } else {
        Params::new()
    };
    if let Some(path) = &a.params_from {
        ctx.inputs.push(FileRecord::of(path)?);
        let text = std::fs::read_to_string(path).map_err(CliError::runtime)?;
        let best: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("{} is not JSON: {e}", path.display())))?;
        let Some(cfg) = best["config"].as_object() else {
            return Err(CliError::usage(format!("{} has no `config` object", path.display())));
        };
        params.extend(cfg.iter().map(|(k, v)| (k.clone(), v.clone())));
    }
    for raw in &a.params {
        let (k, v) = parse_param(raw)?;
        params.insert(k, v);
    }
    let mut fixed = registry::fpsr_config(family.as_str(), &params)?;
    if let Some(t) = ctx.cfg.sweep.tau_best {
        fixed.tau = t;
    }
    ctx.cfg.sweep.family = Some(family.as_str().to_owned());
    ctx.cfg.sweep.tau_best = Some(fixed.tau);
    ctx.cfg.model = ModelSpec {
        name: family.as_str().to_owned(),
        params,
    };

    let mut access = ctx.open_split(&a.split)?;
    let train = access.read(SplitPart::Train)?;
    let fits = sweep_fit(family, &ctx.cfg.sweep.taus, &fixed, &train);
    let target = read_target(&mut access, ctx.cfg.sweep.target)?;
    let rows = sweep_score(family, &fits, &train, &target);

    let n = train.n_items() as f64;
    let footprints: Vec<Value> = fits
        .iter()
        .map(|f| match &f.model {
            Ok(m) => {
                let fp = model_footprint(m);
                let part = m.partition.as_ref();
                json!({
                    "tau_label": f.tau_label,
                    "tau": f.tau,
                    "k": part.map(|p| p.k),
                    "max_partition": part.and_then(|p| p.sizes.iter().max().copied()),
                    "hubs": part.map_or(0, |p| p.hub_items.len()),
                    "block_cost": fp.block_cost,
                    "block_cost_fraction": fp.block_cost as f64 / (n * n),
                    "nnz": fp.nnz_sparse,
                })
            }
            Err(e) => json!({ "tau_label": f.tau_label, "tau": f.tau, "error": e }),
        })
        .collect();
    let mut csv = Vec::new();
    write_sweep_csv(&rows, &mut csv).map_err(CliError::runtime)?;
    let mut out = ctx.open_out()?;
    out.write(SWEEP_CSV, &csv)?;
    out.write_json(
        SWEEP_JSON,
        &json!({ "family": family.as_str(), "target": ctx.cfg.sweep.target, "rows": rows, "footprints": footprints }),
    )?;
    ctx.finish("sweep", out, Some(&access))
}

fn hpo(mut ctx: Ctx, a: &HpoArgs) -> Result<()> {
    let (name, base) = resolve_model(&mut ctx.cfg, &a.model)?;
    if let Some(b) = a.budget {
        ctx.cfg.hpo.budget = b;
    }
    if let Some(o) = &a.objective {
        ctx.cfg.hpo.objective = o.clone();
    }
    let (metric, k) = parse_objective(&ctx.cfg.hpo.objective)?;
    let params = match &ctx.cfg.hpo.space {
        Some(p) => p.clone(),
        None => {
            default_space(&name)
                .ok_or_else(|| CliError::usage(format!("model `{name}` has no default search space; set hpo.space")))?
                .params
        }
    };
    let accepted = registry::default_params(&name)?;
    for key in params.keys().chain(base.keys()) {
        if accepted.get(key).is_none() {
            return Err(CliError::usage(format!("model `{name}` has no parameter `{key}`")));
        }
    }
    ctx.cfg.hpo.space = Some(params.clone());
    let space = SearchSpace {
        budget: ctx.cfg.hpo.budget,
        seed: ctx.cfg.seed,
        objective: ctx.cfg.hpo.objective.clone(),
        ..SearchSpace::new(params)
    };
    space.validate().map_err(|e| CliError::usage(e.to_string()))?;

    let mut access = ctx.open_split(&a.split)?;
    let train = access.read(SplitPart::Train)?;
    access.advance(Stage::Select)?;
    let valid = access.read(SplitPart::Valid)?;
    let users = target_users(&valid);
    let seed = ctx.cfg.seed;
    let merged = |c: &partsim::hpo::Config| {
        let mut p = base.clone();
        p.extend(c.iter().map(|(k, v)| (k.clone(), v.clone())));
        p
    };
    let log = search(
        &space,
        |c| registry::fit(&name, &merged(c), &train, seed).map(|f| f.model),
        |m| {
            let lists = recommend_topk(m, &train, &users, k)?;
            metrics(&lists, &valid, k, Segment::Overall, None).map(|r| r.value(metric))
        },
    )
    .map_err(CliError::runtime)?;

    let mut jsonl = Vec::new();
    log.write_jsonl(&mut jsonl).map_err(CliError::runtime)?;
    let mut out = ctx.open_out()?;
    out.write(TRIALS_FILE, &jsonl)?;
    let best = log.best().cloned();
    if let Some(t) = &best {
        out.write_json(
            BEST_FILE,
            &json!({
                "model": name,
                "objective": ctx.cfg.hpo.objective,
                "value": t.objective,
                "index": t.index,
                "config": merged(&t.config),
            }),
        )?;
    }
    ctx.finish("hpo", out, Some(&access))?;
    if best.is_none() {
        return Err(CliError::runtime("every trial failed; see trials.jsonl"));
    }
    Ok(())
}
