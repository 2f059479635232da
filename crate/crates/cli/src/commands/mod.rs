pub mod eval;
pub mod pipeline;
pub mod score;
pub mod synth;
pub mod train;

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use ssgpfa::data::LabeledSeries;
use ssgpfa::eval::standardize;
use ssgpfa::kernels::KernelExpr;
use ssgpfa::ssgpfa::{fit_em, fit_em_refined, fit_univariate, SsgpfaModel, DEFAULT_MAX_OUTER, DEFAULT_REFINE_ROUNDS};

use crate::config::RunConfig;
use crate::error::CliError;

/// Initial noise variance for the univariate maximum-likelihood fit.
const UNIVARIATE_INITIAL_NOISE: f64 = 0.1;

/// A trained model with a description of how it was obtained.
pub struct Fitted {
    pub model: SsgpfaModel,
    pub method: &'static str,
}

impl Fitted {
    pub fn log_likelihood(&self) -> Option<f64> {
        self.model.training_log.last().copied()
    }
}

/// Fit a model to `train`, standardizing first unless disabled.
///
/// A single latent on univariate data is fitted by maximizing the marginal
/// likelihood over kernel and noise parameters. Everything else runs EM,
/// with the kernels held fixed unless hyperparameter fitting is requested.
pub fn fit(train: &LabeledSeries, cfg: &RunConfig, standardize_default: bool) -> Result<Fitted, CliError> {
    if train.is_empty() {
        return Err(CliError::Core(ssgpfa::Error::Input("training series is empty".into())));
    }
    let dims = train.dims();
    let (values, st) = if cfg.standardize.unwrap_or(standardize_default) {
        let (v, _, st) = standardize(&train.values, &[])?;
        (v, Some(st))
    } else {
        (train.values.clone(), None)
    };
    let latents = cfg.latent_kernels(dims)?;
    let univariate = dims == 1 && latents.len() == 1;
    let mut fitted = if univariate && cfg.fit_hyperparameters.unwrap_or(true) {
        fit_scalar(&train.times, &values, &latents[0])?
    } else {
        let config = cfg.em_config(latents);
        if cfg.fit_hyperparameters == Some(true) {
            Fitted {
                model: fit_em_refined(&train.times, &values, &config, DEFAULT_REFINE_ROUNDS)?,
                method: "em_refined",
            }
        } else {
            Fitted {
                model: fit_em(&train.times, &values, &config)?,
                method: "em",
            }
        }
    };
    fitted.model.standardization = st;
    Ok(fitted)
}

fn fit_scalar(times: &[f64], values: &[DVector<f64>], kernel: &KernelExpr) -> Result<Fitted, CliError> {
    let y: Vec<f64> = values.iter().map(|v| v[0]).collect();
    let observed: Vec<f64> = y.iter().copied().filter(|v| !v.is_nan()).collect();
    if observed.is_empty() {
        return Err(CliError::Core(ssgpfa::Error::Input("training series has no observed values".into())));
    }
    let mean = observed.iter().sum::<f64>() / observed.len() as f64;
    let centered: Vec<f64> = y.iter().map(|v| v - mean).collect();
    let fit = fit_univariate(times, &centered, kernel, UNIVARIATE_INITIAL_NOISE, DEFAULT_MAX_OUTER)?;
    let model = fit.model.with_parameters(
        DMatrix::from_element(1, 1, 1.0),
        DVector::from_element(1, mean),
        fit.model.noise().clone(),
    )?;
    Ok(Fitted {
        model,
        method: "marginal_likelihood",
    })
}

/// Apply the model's standardization, if any.
pub fn prepare(model: &SsgpfaModel, y: &DVector<f64>) -> DVector<f64> {
    match &model.standardization {
        Some(st) => st.apply(y),
        None => y.clone(),
    }
}

pub fn check_dims(model: &SsgpfaModel, dims: usize, what: &str) -> Result<(), CliError> {
    if model.dims() != dims {
        return Err(CliError::Core(ssgpfa::Error::Shape(format!(
            "{what} has {dims} value columns but the model expects {}",
            model.dims()
        ))));
    }
    Ok(())
}

pub fn print_json(value: &impl Serialize) -> Result<(), CliError> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}
