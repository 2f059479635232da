use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use ssgpfa::data::{DatasetLayout, TimeAxis};
use ssgpfa::ssgpfa::Mode;

use crate::config::{RunConfig, Scenario};

#[derive(Debug, Parser)]
#[command(name = "ssgpfa", version, about = "Online anomaly detection with state-space GP factor analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model to a training series and save it as JSON.
    Train(RunArgs),
    /// Stream a series through a saved model and write per-step scores.
    Score(RunArgs),
    /// Stream a series and write per-step latent attributions.
    Explain(RunArgs),
    /// Range-adjusted precision, recall and F1 of a score file.
    Eval(RunArgs),
    /// Generate a synthetic scenario with train and test splits.
    Synth(RunArgs),
    /// Train, score and evaluate a synthetic scenario or a dataset directory.
    Pipeline(RunArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Train(_) => "train",
            Command::Score(_) => "score",
            Command::Explain(_) => "explain",
            Command::Eval(_) => "eval",
            Command::Synth(_) => "synth",
            Command::Pipeline(_) => "pipeline",
        }
    }

    pub fn args(&self) -> &RunArgs {
        match self {
            Command::Train(a)
            | Command::Score(a)
            | Command::Explain(a)
            | Command::Eval(a)
            | Command::Synth(a)
            | Command::Pipeline(a) => a,
        }
    }
}

/// Options shared by all subcommands. Each subcommand reads the ones it needs.
#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// JSON file with default values for any of these options (snake_case keys).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Series CSV, or a dataset directory for `pipeline`.
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    /// Output file (directory for `synth`).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Model JSON written by `train` and read by `score` and `explain`.
    #[arg(long, short)]
    pub model: Option<PathBuf>,
    /// Series CSV whose `is_anomaly` column labels the scores given to `eval`.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Write the threshold curve of `eval` to this CSV.
    #[arg(long)]
    pub curve: Option<PathBuf>,
    /// Latent kernels separated by `;`, e.g. `matern32(lengthscale=50, variance=1); cosine(period=24, variance=1)`.
    #[arg(long)]
    pub kernels: Option<String>,
    /// Number of latents (default 4 for multivariate data, capped at the dimension).
    #[arg(long, short = 'k')]
    pub latents: Option<usize>,
    /// `orthogonal` or `unconstrained`.
    #[arg(long)]
    pub mode: Option<Mode>,
    /// Skip threshold on the predictive likelihood.
    #[arg(long, conflicts_with = "log_rho")]
    pub rho: Option<f64>,
    /// Skip threshold on the predictive log-likelihood.
    #[arg(long, allow_hyphen_values = true)]
    pub log_rho: Option<f64>,
    /// Skip updates on rejected observations (default true).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub robust: Option<bool>,
    /// Drop individual rejected dimensions instead of the whole observation.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub per_dimension: Option<bool>,
    /// Treat training points the current model rejects as missing during EM.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub robust_training: Option<bool>,
    /// Maximum EM iterations (default 50).
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Relative log-likelihood change at which EM stops.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Seed of the synthetic scenarios (default 0).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fixed decision threshold; flags scores strictly above it.
    #[arg(long, conflicts_with = "sweep", allow_hyphen_values = true)]
    pub threshold: Option<f64>,
    /// Pick the threshold maximizing F1 (the default without `--threshold`).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub sweep: Option<bool>,
    /// csv, nab, nasa (also smap, msl) or smd.
    #[arg(long)]
    pub dataset_layout: Option<DatasetLayout>,
    /// `timestamp` or `index`.
    #[arg(long)]
    pub time_axis: Option<TimeAxis>,
    /// Scale each dimension by training mean and standard deviation (default true).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub standardize: Option<bool>,
    /// Fit kernel hyperparameters by maximum likelihood. Defaults to true for
    /// a single latent on univariate data and false otherwise.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub fit_hyperparameters: Option<bool>,
    #[arg(long, value_enum)]
    pub scenario: Option<Scenario>,
    /// Length of the generated univariate series.
    #[arg(long)]
    pub length: Option<usize>,
    /// Read the synthetic noise level 0.15 as a standard deviation instead of a variance.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub noise_std: Option<bool>,
    /// Column of the `eval` input holding the scores (default `score`).
    #[arg(long)]
    pub score_column: Option<String>,
}

impl RunArgs {
    pub fn to_config(&self) -> RunConfig {
        RunConfig {
            command: None,
            input: self.input.clone(),
            output: self.output.clone(),
            model: self.model.clone(),
            labels: self.labels.clone(),
            curve: self.curve.clone(),
            kernels: self.kernels.clone(),
            latents: self.latents,
            mode: self.mode,
            rho: self.rho,
            log_rho: self.log_rho,
            robust: self.robust,
            per_dimension: self.per_dimension,
            robust_training: self.robust_training,
            max_iters: self.max_iters,
            tol: self.tol,
            seed: self.seed,
            threshold: self.threshold,
            sweep: self.sweep,
            dataset_layout: self.dataset_layout,
            time_axis: self.time_axis,
            standardize: self.standardize,
            fit_hyperparameters: self.fit_hyperparameters,
            scenario: self.scenario,
            length: self.length,
            noise_std: self.noise_std,
            score_column: self.score_column.clone(),
        }
    }
}
