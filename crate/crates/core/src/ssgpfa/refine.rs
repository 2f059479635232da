use log::debug;
use nalgebra::DVector;

use super::em::{fit_em, fit_em_from, EmConfig};
use super::joint::assemble_joint;
use super::univariate::DEFAULT_MAX_OUTER;
use super::SsgpfaModel;
use crate::error::Result;
use crate::kalman::filter_batch;
use crate::optim::bfgs_minimize;

/// Default number of refinement rounds for [`fit_em_refined`].
pub const DEFAULT_REFINE_ROUNDS: usize = 3;

/// Marginal log-likelihood of the data under the joint state-space model.
pub fn log_marginal_likelihood(model: &SsgpfaModel, times: &[f64], ys: &[DVector<f64>]) -> Result<f64> {
    Ok(filter_batch(&assemble_joint(model)?, times, ys)?.log_likelihood)
}

/// Maximize the marginal likelihood over the kernel parameters of all
/// latents (in log space), holding loading, offset and noise fixed.
pub fn refine_kernels(
    model: &SsgpfaModel,
    times: &[f64],
    ys: &[DVector<f64>],
    max_iters: usize,
) -> Result<SsgpfaModel> {
    let sizes: Vec<usize> = model.latents().iter().map(|k| k.params().len()).collect();
    let theta: Vec<f64> = model.latents().iter().flat_map(|k| k.params()).map(f64::ln).collect();
    let rebuild = |th: &[f64]| -> Result<SsgpfaModel> {
        let mut rest = th;
        let mut latents = Vec::with_capacity(sizes.len());
        for (kernel, &n) in model.latents().iter().zip(&sizes) {
            let (head, tail) = rest.split_at(n);
            rest = tail;
            latents.push(kernel.with_params(&head.iter().map(|v| v.exp()).collect::<Vec<_>>())?);
        }
        model.with_latents(latents)
    };
    let objective = |th: &[f64]| {
        rebuild(th)
            .and_then(|m| log_marginal_likelihood(&m, times, ys))
            .map_or(f64::INFINITY, |ll| -ll)
    };
    let best = bfgs_minimize(objective, &theta, max_iters);
    rebuild(&best.x)
}

/// EM with an outer loop over the kernel hyperparameters: each round
/// refines the kernels with [`refine_kernels`] and reruns EM from there.
/// Stops after `rounds` rounds or once a round's relative gain in marginal
/// likelihood drops below `config.tol`. `training_log` holds the EM logs of
/// all runs, concatenated.
pub fn fit_em_refined(
    times: &[f64],
    ys: &[DVector<f64>],
    config: &EmConfig,
    rounds: usize,
) -> Result<SsgpfaModel> {
    let mut model = fit_em(times, ys, config)?;
    let mut log = std::mem::take(&mut model.training_log);
    let mut ll = log_marginal_likelihood(&model, times, ys)?;
    for round in 1..=rounds {
        let refined = refine_kernels(&model, times, ys, DEFAULT_MAX_OUTER)?;
        model = fit_em_from(refined, times, ys, config)?;
        log.append(&mut model.training_log);
        let next = log_marginal_likelihood(&model, times, ys)?;
        debug!("refinement round {round}: log-likelihood {next:.6}");
        let gain = (next - ll) / ll.abs().max(f64::MIN_POSITIVE);
        ll = next;
        if gain < config.tol {
            break;
        }
    }
    model.training_log = log;
    Ok(model)
}
