//! `memechain` command-line tool.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{RunConfig, UsageError};

#[derive(Parser, Debug)]
#[command(
    name = "memechain",
    version,
    about = "Multi-label classifier chains over fused embeddings"
)]
pub struct Cli {
    /// Flat TOML config file; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Per-label counts over original records.
    Stats(DataArgs),
    /// Pairwise label co-occurrence as CSV.
    Cooc(DataArgs),
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Split, train the chain, tune the threshold and write the model.
    Train(TrainArgs),
    /// Re-tune a model's threshold on a labeled dataset.
    Tune(ModelArgs),
    /// Score a labeled dataset with a tuned model.
    Eval(ModelArgs),
    /// Write per-group label predictions and scores.
    Predict(PredictArgs),
}

#[derive(Args, Debug)]
pub struct DataArgs {
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    /// Dataset file; defaults to the config's `train`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Also write the generated taxonomy here.
    #[arg(long)]
    pub taxonomy_out: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 8)]
    pub dim: usize,
    #[arg(long, default_value_t = 4)]
    pub labels: usize,
    #[arg(long, default_value_t = 0.5)]
    pub correlation: f64,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Paraphrase copies per group and their text-noise scale.
    #[arg(long, num_args = 2, value_names = ["K", "SIGMA"])]
    pub augment: Option<Vec<String>>,
}

#[derive(Args, Debug, Default)]
pub struct PipelineArgs {
    /// image, text or fused
    #[arg(long)]
    pub features: Option<String>,
    #[arg(long)]
    pub no_sharpen: bool,
    /// Ignore paraphrase records for training and inference.
    #[arg(long)]
    pub no_augment: bool,
    /// Comma-separated label indices.
    #[arg(long, value_delimiter = ',')]
    pub order: Option<Vec<usize>>,
    /// labels or probabilities
    #[arg(long)]
    pub chain_feed: Option<String>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// micro or macro
    #[arg(long)]
    pub metric: Option<String>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub split_fraction: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the validation split as a dataset file.
    #[arg(long)]
    pub validation_out: Option<PathBuf>,
    /// Write the validation metrics report.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Args, Debug)]
pub struct ModelArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Dataset file; defaults to the config's `dev` for tune and `test` for eval.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Report (eval) or updated model (tune) path.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Overrides the model's tuned threshold.
    #[arg(long)]
    pub threshold: Option<f64>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<memechain_core::Error>() {
            return if e.is_numerical() { 3 } else { 2 };
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let run = || -> anyhow::Result<()> {
        let cfg = match &cli.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        commands::run(cli.command, cfg)
    };
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
