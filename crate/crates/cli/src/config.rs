//! Run configuration shared by all subcommands.
//!
//! Values come from three layers: command-line flags override a JSON config
//! file, which overrides the built-in defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use ssgpfa::data::{DatasetLayout, TimeAxis};
use ssgpfa::kalman::{RobustConfig, SkipRule, DEFAULT_RHO};
use ssgpfa::kernels::{parse_latent_list, KernelExpr};
use ssgpfa::ssgpfa::{EmConfig, Mode};

use crate::error::CliError;

/// Default multivariate latents: four Matérn-3/2 processes with fixed lengthscales.
pub const DEFAULT_LENGTHSCALES: [f64; 4] = [130.0, 200.0, 50.0, 10.0];
/// Default univariate kernel, refined by maximum likelihood during training.
pub const DEFAULT_UNIVARIATE_KERNEL: &str = "matern32(lengthscale=10, variance=1)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Ten sensors driven by three latents with latent and sensor anomalies.
    Fig1,
    /// Univariate series with two spikes and a change point.
    Fig2,
    /// Univariate series without anomalies.
    Univariate,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Informational; the subcommand on the command line decides what runs.
    pub command: Option<String>,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub curve: Option<PathBuf>,
    pub kernels: Option<String>,
    pub latents: Option<usize>,
    pub mode: Option<Mode>,
    pub rho: Option<f64>,
    pub log_rho: Option<f64>,
    pub robust: Option<bool>,
    pub per_dimension: Option<bool>,
    pub robust_training: Option<bool>,
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub threshold: Option<f64>,
    pub sweep: Option<bool>,
    pub dataset_layout: Option<DatasetLayout>,
    pub time_axis: Option<TimeAxis>,
    pub standardize: Option<bool>,
    pub fit_hyperparameters: Option<bool>,
    pub scenario: Option<Scenario>,
    pub length: Option<usize>,
    pub noise_std: Option<bool>,
    pub score_column: Option<String>,
}

macro_rules! overlay {
    ($base:ident, $top:ident; $($field:ident),* $(,)?) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field; } )*
    };
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Apply `top` over `self`. Mutually exclusive pairs are replaced as a
    /// unit, so a flag never combines with its counterpart from the file.
    pub fn overlay(mut self, top: RunConfig) -> Self {
        if top.rho.is_some() || top.log_rho.is_some() {
            self.rho = top.rho;
            self.log_rho = top.log_rho;
        }
        if top.threshold.is_some() || top.sweep.is_some() {
            self.threshold = top.threshold;
            self.sweep = top.sweep;
        }
        overlay!(self, top;
            command, input, output, model, labels, curve, kernels, latents, mode, robust,
            per_dimension, robust_training, max_iters, tol, seed, dataset_layout, time_axis,
            standardize, fit_hyperparameters, scenario, length, noise_std, score_column,
        );
        self
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.rho.is_some() && self.log_rho.is_some() {
            return Err(CliError::Config("`rho` and `log_rho` are mutually exclusive".into()));
        }
        if self.threshold.is_some() && self.sweep == Some(true) {
            return Err(CliError::Config("`threshold` and `sweep` are mutually exclusive".into()));
        }
        if let Some(rho) = self.rho {
            if !(rho > 0.0 && rho <= 1.0) {
                return Err(CliError::Config(format!("rho must lie in (0, 1], got {rho}")));
            }
        }
        if let Some(tol) = self.tol {
            if tol.is_nan() || tol < 0.0 {
                return Err(CliError::Config(format!("tol must be nonnegative, got {tol}")));
            }
        }
        if self.latents == Some(0) {
            return Err(CliError::Config("latents must be at least 1".into()));
        }
        Ok(())
    }

    pub fn input(&self) -> Result<&Path, CliError> {
        self.input
            .as_deref()
            .ok_or_else(|| CliError::Config("an input path is required (--input)".into()))
    }

    pub fn model_path(&self) -> Result<&Path, CliError> {
        self.model
            .as_deref()
            .ok_or_else(|| CliError::Config("a model path is required (--model)".into()))
    }

    pub fn mode(&self) -> Mode {
        self.mode.unwrap_or_default()
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn time_axis_or(&self, default: TimeAxis) -> TimeAxis {
        self.time_axis.unwrap_or(default)
    }

    pub fn robust_config(&self) -> RobustConfig {
        let mut c = match (self.rho, self.log_rho) {
            (_, Some(l)) => RobustConfig::with_log_rho(l),
            (Some(r), None) => RobustConfig::with_rho(r),
            (None, None) => RobustConfig::with_rho(DEFAULT_RHO),
        };
        c.robust = self.robust.unwrap_or(true);
        if self.per_dimension == Some(true) {
            c.rule = SkipRule::PerDimension;
        }
        c
    }

    /// Latent kernels for data with `dims` observed dimensions.
    ///
    /// An explicit list is used as given (a single expression is repeated
    /// `latents` times). Without one, univariate data gets one Matérn latent
    /// and multivariate data the four default Matérn latents, cut to `latents`
    /// and to `dims`.
    pub fn latent_kernels(&self, dims: usize) -> Result<Vec<KernelExpr>, CliError> {
        let list = match &self.kernels {
            Some(s) => {
                let mut list = parse_latent_list(s)?;
                match self.latents {
                    Some(k) if list.len() == 1 => list = vec![list[0].clone(); k],
                    Some(k) if k != list.len() => {
                        return Err(CliError::Config(format!(
                            "--latents {k} does not match the {} kernel expressions given",
                            list.len()
                        )))
                    }
                    _ => {}
                }
                list
            }
            None if dims == 1 => vec![DEFAULT_UNIVARIATE_KERNEL.parse()?],
            None => {
                let k = self.latents.unwrap_or(DEFAULT_LENGTHSCALES.len());
                (0..k)
                    .map(|i| KernelExpr::matern32(DEFAULT_LENGTHSCALES[i % DEFAULT_LENGTHSCALES.len()], 1.0))
                    .collect()
            }
        };
        if list.len() > dims {
            if self.kernels.is_some() {
                return Err(CliError::Config(format!(
                    "{} latents requested for {dims}-dimensional data",
                    list.len()
                )));
            }
            log::info!("using {dims} latents for {dims}-dimensional data");
            return Ok(list.into_iter().take(dims).collect());
        }
        Ok(list)
    }

    pub fn em_config(&self, latents: Vec<KernelExpr>) -> EmConfig {
        let mut c = EmConfig::new(latents, self.mode());
        if let Some(m) = self.max_iters {
            c.max_iters = m;
        }
        if let Some(t) = self.tol {
            c.tol = t;
        }
        if self.robust_training == Some(true) {
            c.robust_training = Some(self.robust_config());
        }
        c
    }
}
