use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use partsim::data::Delimiter;

use crate::config::Target;

#[derive(Debug, Parser)]
#[command(name = "partsim", version, about = "Partition-aware item-item recommender benchmarks")]
pub struct Cli {
    /// TOML run configuration; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Global seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dataset statistics to stats.json.
    Stats(DataArgs),
    /// Seeded train/valid/test split plus split.manifest.json.
    Split(SplitArgs),
    /// Fits one model to model.bin and diagnostics.json.
    Fit(FitArgs),
    /// Scores a fitted model into report.csv and report.json.
    Eval(EvalArgs),
    /// Fits and scores several models with significance tests.
    Bench(BenchArgs),
    /// Partition-size sweep of an FPSR variant into sweep.csv.
    Sweep(SweepArgs),
    /// Hyperparameter search on the validation split into trials.jsonl.
    Hpo(HpoArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Interaction file.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub delimiter: Option<DelimiterArg>,
    #[arg(long)]
    pub user_col: Option<usize>,
    #[arg(long)]
    pub item_col: Option<usize>,
    #[arg(long)]
    pub rating_col: Option<usize>,
    /// Keep interactions rated at least this much.
    #[arg(long)]
    pub min_rating: Option<f64>,
    /// Skip the first line.
    #[arg(long)]
    pub header: bool,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum DelimiterArg {
    Tab,
    Comma,
    Whitespace,
}

impl From<DelimiterArg> for Delimiter {
    fn from(d: DelimiterArg) -> Self {
        match d {
            DelimiterArg::Tab => Delimiter::Tab,
            DelimiterArg::Comma => Delimiter::Comma,
            DelimiterArg::Whitespace => Delimiter::Whitespace,
        }
    }
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub valid_fraction: Option<f64>,
    #[arg(long)]
    pub min_user_interactions: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Registered model name.
    #[arg(long)]
    pub model: Option<String>,
    /// Model parameter as key=value; repeatable.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    pub params: Vec<String>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Directory written by `split`.
    #[arg(long)]
    pub split: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Comma-separated cutoffs.
    #[arg(long, value_delimiter = ',')]
    pub cutoffs: Option<Vec<usize>>,
    /// Adds head and tail segments.
    #[arg(long)]
    pub head_fraction: Option<f64>,
    #[arg(long, value_enum)]
    pub target: Option<Target>,
    /// Dataset label in reports.
    #[arg(long)]
    pub dataset: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub split: PathBuf,
    /// Model file written by `fit`.
    #[arg(long)]
    pub model_file: PathBuf,
    #[command(flatten)]
    pub report: ReportArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub split: PathBuf,
    /// Comma-separated model names; replaces the configured list.
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<String>>,
    /// Reference model for significance tests.
    #[arg(long)]
    pub baseline: Option<String>,
    #[command(flatten)]
    pub report: ReportArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub split: PathBuf,
    /// fpsr, fpsr+d or fpsr+f.
    #[arg(long)]
    pub family: Option<String>,
    /// Comma-separated τ grid.
    #[arg(long, value_delimiter = ',')]
    pub taus: Option<Vec<f64>>,
    #[arg(long)]
    pub tau_best: Option<f64>,
    /// best.json from `hpo`; its configuration seeds the fixed parameters.
    #[arg(long)]
    pub params_from: Option<PathBuf>,
    #[arg(long = "param", value_name = "KEY=VALUE")]
    pub params: Vec<String>,
    #[arg(long, value_enum)]
    pub target: Option<Target>,
}

#[derive(Debug, Args)]
pub struct HpoArgs {
    #[arg(long)]
    pub split: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub budget: Option<usize>,
    /// recall@K or ndcg@K on the validation split.
    #[arg(long)]
    pub objective: Option<String>,
}
