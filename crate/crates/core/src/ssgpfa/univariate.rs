use nalgebra::{DMatrix, DVector};

use super::{Mode, NoiseModel, SsgpfaModel};
use crate::error::{Error, Result};
use crate::kalman::{filter_batch, GpStateSpace};
use crate::kernels::KernelExpr;
use crate::optim::bfgs_minimize;

/// Default cap on optimizer iterations for [`fit_univariate`].
pub const DEFAULT_MAX_OUTER: usize = 20;

/// Single-output model `y = f(t) + ε` with `f ~ GP(0, k)`.
pub fn univariate_model(kernel: KernelExpr, noise_variance: f64) -> Result<SsgpfaModel> {
    SsgpfaModel::new(
        vec![kernel],
        DMatrix::from_element(1, 1, 1.0),
        DVector::zeros(1),
        NoiseModel::Isotropic(noise_variance),
        Mode::Orthogonal,
    )
}

/// Kalman-filter marginal log-likelihood of a scalar series (missing values as `NaN`).
pub fn univariate_log_likelihood(
    kernel: &KernelExpr,
    noise_variance: f64,
    times: &[f64],
    y: &[f64],
) -> Result<f64> {
    let model = GpStateSpace::new(kernel.build()?, noise_variance)?;
    let ys: Vec<_> = y.iter().map(|v| DVector::from_element(1, *v)).collect();
    Ok(filter_batch(&model, times, &ys)?.log_likelihood)
}

#[derive(Debug, Clone)]
pub struct UnivariateFit {
    pub model: SsgpfaModel,
    pub initial_log_likelihood: f64,
    pub log_likelihood: f64,
    pub iterations: usize,
}

/// Maximize the marginal log-likelihood over kernel parameters and noise
/// variance in log space with BFGS on finite-difference gradients.
pub fn fit_univariate(
    times: &[f64],
    y: &[f64],
    kernel: &KernelExpr,
    noise_variance: f64,
    max_outer: usize,
) -> Result<UnivariateFit> {
    if times.len() != y.len() {
        return Err(Error::Shape(format!(
            "{} timestamps for {} values",
            times.len(),
            y.len()
        )));
    }
    let initial_log_likelihood = univariate_log_likelihood(kernel, noise_variance, times, y)?;
    let mut theta: Vec<f64> = kernel.params().iter().map(|p| p.ln()).collect();
    theta.push(noise_variance.ln());
    let objective = |th: &[f64]| {
        let params: Vec<f64> = th.iter().map(|v| v.exp()).collect();
        let (noise, kparams) = params.split_last().expect("noise is always present");
        kernel
            .with_params(kparams)
            .and_then(|k| univariate_log_likelihood(&k, *noise, times, y))
            .map(|ll| -ll)
            .unwrap_or(f64::INFINITY)
    };
    let best = bfgs_minimize(objective, &theta, max_outer);
    let params: Vec<f64> = best.x.iter().map(|v| v.exp()).collect();
    let (noise, kparams) = params.split_last().expect("noise is always present");
    let fitted = kernel.with_params(kparams)?;
    let mut model = univariate_model(fitted, *noise)?;
    model.training_log = vec![initial_log_likelihood, -best.value];
    Ok(UnivariateFit {
        model,
        initial_log_likelihood,
        log_likelihood: -best.value,
        iterations: best.iterations,
    })
}
