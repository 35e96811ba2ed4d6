//! `soilspec` command-line interface.
//!
//! Exit codes: 0 on success, 1 for user or data errors (bad flags, unreadable
//! or invalid files, failed fits), 2 for internal errors.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use soilspec::preprocess::PreprocessMode;
use soilspec::ModelKind;

#[derive(Debug, Parser)]
#[command(name = "soilspec", version, about = "Soil-moisture regression from hyperspectral reflectance and LWIR temperature")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split, preprocess, fit and score once per seed; writes models and reports.
    Train(TrainArgs),
    /// 10-fold cross-validated grid search on the training subset.
    GridSearch(GridSearchArgs),
    /// Feature importances and mean-spectrum table of a saved tree ensemble.
    Importance(ImportanceArgs),
    /// Write a synthetic dataset CSV.
    Synth(SynthArgs),
    /// Score a saved model and preprocessor on a CSV.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct IoArgs {
    /// JSON config file; command-line flags override its values.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Input dataset CSV.
    #[arg(long, value_name = "FILE")]
    pub input: Option<PathBuf>,
    /// Output directory; nothing is written outside it.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Model: linear, pls, rf, et, adaboost, gb, knn, svr, mlp, som [default: et]
    #[arg(long)]
    pub model: Option<ModelKind>,
    /// Preprocessing: none, pca, scaling [default: none]
    #[arg(long)]
    pub preprocess: Option<PreprocessMode>,
    /// Hyperparameter override, repeatable (lists as `[a;b]`). Defaults are listed below.
    #[arg(long = "hp", value_name = "KEY=VALUE")]
    pub hp: Vec<String>,
    /// Principal components kept under pca [default: 20]
    #[arg(long)]
    pub n_components: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Base seed; every random stream derives from it [default: 1]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Training rows [default: 641 of 1332, same proportion otherwise]
    #[arg(long)]
    pub train_count: Option<usize>,
    /// Test rows [default: the remaining rows]
    #[arg(long)]
    pub test_count: Option<usize>,
    /// Worker threads; results do not depend on it [default: all cores]
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub io: IoArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub split: SplitArgs,
    /// Number of seeds, consecutive from --seed [default: 7]
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Grid JSON (`{"model": "knn", "grid": {"n_neighbors": [3, 6]}}`); searched per seed.
    #[arg(long, value_name = "FILE")]
    pub grid: Option<PathBuf>,
    /// Grid-search the model's shipped default grid per seed.
    #[arg(long, conflicts_with = "grid")]
    pub search: bool,
    /// Reuse the first seed's train/test split for every seed.
    #[arg(long)]
    pub fixed_split: bool,
    /// Cross-validation folds when searching [default: 10]
    #[arg(long)]
    pub cv_folds: Option<usize>,
    /// Bins per axis of the predicted-vs-true histogram [default: 20]
    #[arg(long)]
    pub hist_bins: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GridSearchArgs {
    #[command(flatten)]
    pub io: IoArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub split: SplitArgs,
    /// Grid JSON [default: the model's shipped grid]
    #[arg(long, value_name = "FILE")]
    pub grid: Option<PathBuf>,
    /// Cross-validation folds [default: 10]
    #[arg(long)]
    pub cv_folds: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ImportanceArgs {
    /// Saved model JSON (rf, et, adaboost or gb).
    #[arg(long, value_name = "FILE")]
    pub model_file: PathBuf,
    /// Dataset CSV for the mean/std spectrum.
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON config file; its `synth` object supplies generator settings.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// File name inside the output directory.
    #[arg(long, default_value = "synthetic.csv")]
    pub file_name: String,
    /// Number of samples [default: 1332]
    #[arg(long)]
    pub n: Option<usize>,
    /// Generator seed [default: 1]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Reflectance noise standard deviation [default: 0.01]
    #[arg(long)]
    pub noise: Option<f64>,
    /// Target noise standard deviation, percentage points [default: 1.5]
    #[arg(long)]
    pub target_noise: Option<f64>,
    /// LWIR noise standard deviation, °C [default: 3]
    #[arg(long)]
    pub lwir_noise: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Saved model JSON.
    #[arg(long, value_name = "FILE")]
    pub model_file: PathBuf,
    /// Saved preprocessor state JSON.
    #[arg(long, value_name = "FILE")]
    pub preprocessor: PathBuf,
    /// Test dataset CSV.
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    /// Output directory for metrics.json.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

/// Per-model defaults appended to `--help`.
fn defaults_help() -> String {
    let mut s = String::from("Model defaults (override with --hp KEY=VALUE):\n");
    for kind in ModelKind::ALL {
        let hp: Vec<String> = kind.default_hyperparameters().iter().map(|(k, v)| format!("{k}={v}")).collect();
        let text = if hp.is_empty() { "-".to_string() } else { hp.join(" ") };
        s.push_str(&format!("  {:<9} {text}\n", kind.name()));
    }
    s
}

fn parse_cli() -> Result<Cli, clap::Error> {
    let help = defaults_help();
    let mut cmd = Cli::command().after_help(help.clone());
    for name in ["train", "grid-search"] {
        cmd = cmd.mut_subcommand(name, |c| c.after_help(help.clone()));
    }
    Cli::from_arg_matches(&cmd.try_get_matches()?)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match parse_cli() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match std::panic::catch_unwind(|| commands::run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(_) => ExitCode::from(2),
    }
}
