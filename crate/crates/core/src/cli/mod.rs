//! Command-line surface: `simulate`, `train`, `evaluate` and `forecast`.

mod checkpoint;
mod commands;
mod config;
mod fsio;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use checkpoint::{checkpoint_id, Checkpoint, Provenance, RngState, FORMAT_VERSION, MAGIC};
pub use commands::{
    cmd_evaluate, cmd_forecast, cmd_simulate, cmd_train, evaluate_with, ForecastOutput, RunRecord,
    TrainSummary, CHECKPOINT_FILE, FORECAST_FILE, MANIFEST_FILE, METRICS_FILE, PRIOR_FILE,
    REPORT_FILE, RUN_FILE,
};
pub use config::{Generator, RunConfig};
pub use fsio::write_atomic;

use crate::error::VdmError;
use crate::eval::NllReduction;
use crate::nets::{SamplerMode, WeightingMode};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] VdmError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "vdm",
    version,
    about = "Multi-modal sequential latent-variable forecaster"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a dataset directory.
    Simulate(SimulateArgs),
    /// Train a model on a dataset manifest.
    Train(TrainArgs),
    /// Compute metrics of a checkpoint on the test split.
    Evaluate(EvaluateArgs),
    /// Sample continuations of trajectory prefixes.
    Forecast(ForecastArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration file (TOML with RunConfig keys).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long = "gen", value_enum)]
    pub generator: Option<Generator>,
    /// Training sequences.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub n_val: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    #[arg(long)]
    pub n_groups: Option<usize>,
    #[arg(long)]
    pub group_size: Option<usize>,
    #[arg(long)]
    pub seq_len: Option<usize>,
    #[arg(long)]
    pub prefix_len: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Dataset manifest or the directory holding it.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Resume from this checkpoint.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub d_z: Option<usize>,
    #[arg(long)]
    pub d_h: Option<usize>,
    #[arg(long, value_parser = parse_sampler)]
    pub sampler: Option<SamplerMode>,
    #[arg(long, value_parser = parse_weighting)]
    pub weighting: Option<WeightingMode>,
    #[arg(long)]
    pub omega1: Option<f64>,
    #[arg(long)]
    pub omega2: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub no_normalize: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Forecasts per truth for the multi-step NLL.
    #[arg(long)]
    pub n_forecasts: Option<usize>,
    /// Use at most this many test sequences.
    #[arg(long)]
    pub eval_sequences: Option<usize>,
    /// Prefix radius for grouping when the dataset ships no groups.
    #[arg(long)]
    pub group_radius: Option<f64>,
    #[arg(long, value_parser = parse_reduction)]
    pub reduction: Option<NllReduction>,
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Dataset manifest; its test split is forecast.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Trajectory CSV to forecast instead of a manifest split.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub seq_len: Option<usize>,
    #[arg(long)]
    pub prefix_len: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub horizon: Option<i64>,
    /// Continuations per trajectory.
    #[arg(long)]
    pub n: Option<usize>,
    /// Latent draws per step from the predictive prior.
    #[arg(long)]
    pub prior_draws: Option<usize>,
}

fn parse_sampler(s: &str) -> Result<SamplerMode, String> {
    toml::Value::String(s.into())
        .try_into()
        .map_err(|_| format!("unknown sampler '{s}' (sca, monte_carlo)"))
}

fn parse_weighting(s: &str) -> Result<WeightingMode, String> {
    toml::Value::String(s.into())
        .try_into()
        .map_err(|_| format!("unknown weighting '{s}' (delta, categorical)"))
}

fn parse_reduction(s: &str) -> Result<NllReduction, String> {
    toml::Value::String(s.into())
        .try_into()
        .map_err(|_| format!("unknown reduction '{s}' (mean, sum)"))
}

fn base_config(common: &Common) -> Result<RunConfig, CliError> {
    let file = match &common.config {
        Some(p) => RunConfig::load(p).map_err(|e| CliError::Usage(e.to_string()))?,
        None => RunConfig::default(),
    };
    Ok(file.overlay(&RunConfig {
        seed: common.seed,
        out_dir: common.out.clone(),
        ..Default::default()
    }))
}

/// Layers flags over the config file.
pub fn resolve(command: &Command) -> Result<RunConfig, CliError> {
    let (base, flags) = match command {
        Command::Simulate(a) => (
            base_config(&a.common)?,
            RunConfig {
                generator: a.generator,
                n_train: a.n,
                n_val: a.n_val,
                n_test: a.n_test,
                n_groups: a.n_groups,
                group_size: a.group_size,
                seq_len: a.seq_len,
                prefix_len: a.prefix_len,
                ..Default::default()
            },
        ),
        Command::Train(a) => (
            base_config(&a.common)?,
            RunConfig {
                manifest: a.data.clone(),
                checkpoint: a.checkpoint.clone(),
                k: a.k,
                d_z: a.d_z,
                d_h: a.d_h,
                sampler_mode: a.sampler,
                weighting_mode: a.weighting,
                omega1: a.omega1,
                omega2: a.omega2,
                lr: a.lr,
                epochs: a.epochs,
                batch_size: a.batch_size,
                patience: a.patience,
                threads: a.threads,
                normalize: a.no_normalize.then_some(false),
                ..Default::default()
            },
        ),
        Command::Evaluate(a) => (
            base_config(&a.common)?,
            RunConfig {
                checkpoint: a.checkpoint.clone(),
                manifest: a.data.clone(),
                n_forecasts: a.n_forecasts,
                eval_sequences: a.eval_sequences,
                group_radius: a.group_radius,
                nll_reduction: a.reduction,
                ..Default::default()
            },
        ),
        Command::Forecast(a) => {
            let horizon = match a.horizon {
                Some(h) if h <= 0 => {
                    return Err(CliError::Usage(format!(
                        "horizon must be positive, got {h}"
                    )))
                }
                h => h.map(|h| h as usize),
            };
            (
                base_config(&a.common)?,
                RunConfig {
                    checkpoint: a.checkpoint.clone(),
                    manifest: a.data.clone(),
                    input: a.input.clone(),
                    seq_len: a.seq_len,
                    prefix_len: a.prefix_len,
                    horizon,
                    n_forecasts: a.n,
                    prior_draws: a.prior_draws,
                    ..Default::default()
                },
            )
        }
    };
    let cfg = base.overlay(&flags);
    if cfg.seed.is_none() {
        return Err(CliError::Usage(
            "a seed is required (--seed or `seed`)".into(),
        ));
    }
    Ok(cfg)
}

/// Runs a parsed command; returns a one-line summary for the terminal.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    let cfg = resolve(&cli.command)?;
    match &cli.command {
        Command::Simulate(_) => {
            if cfg.generator.is_none() {
                return Err(CliError::Usage("a generator is required (--gen)".into()));
            }
            let m = cmd_simulate(&cfg)?;
            Ok(format!(
                "simulated {} train / {} val / {} test sequences into {}",
                m.n_train,
                m.n_val,
                m.n_test,
                cfg.out_dir().display()
            ))
        }
        Command::Train(_) => {
            let s = cmd_train(&cfg)?;
            Ok(format!(
                "checkpoint {} (epoch {}, val nll {:?})",
                s.checkpoint_id, s.best_epoch, s.best_val_nll
            ))
        }
        Command::Evaluate(_) => {
            let r = cmd_evaluate(&cfg)?;
            Ok(r.to_toml()?)
        }
        Command::Forecast(_) => {
            let f = cmd_forecast(&cfg)?;
            Ok(format!("forecasts written to {}", f.forecasts.display()))
        }
    }
}
