//! State-space Gaussian process factor analysis: joint assembly, EM training,
//! per-latent inference under an orthonormal loading, and online scoring.

mod em;
mod io;
mod joint;
mod latent;
mod model;
mod refine;
mod score;
mod univariate;

pub use em::{
    e_step, e_step_with, fit_em, fit_em_from, fit_em_with_observer, initialize, m_step, orthogonalize,
    update_offset, EmConfig, EmIteration, Inference, LatentPosterior, MStepUpdate,
};
pub use io::{MODEL_FORMAT, MODEL_VERSION};
pub use joint::{assemble_joint, JointSsm};
pub use model::{orthogonality_defect, Mode, NoiseModel, SsgpfaModel, Standardization, ORTHOGONALITY_TOL};
pub use refine::{fit_em_refined, log_marginal_likelihood, refine_kernels, DEFAULT_REFINE_ROUNDS};
pub use score::{score_online, Engine, OnlineScorer, ScoredPoint};
pub use univariate::{
    fit_univariate, univariate_log_likelihood, univariate_model, UnivariateFit, DEFAULT_MAX_OUTER,
};

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::kalman::observed_rows;
use crate::linalg::{gaussian_log_density, symmetrize};

/// Sum over time of `log N(y_t; d, Ψ + C K̃ Cᵀ)` where `K̃` holds each
/// latent's prior variance, ignoring temporal coupling. Missing entries are
/// marginalized out.
pub fn fa_likelihood(model: &SsgpfaModel, ys: &[DVector<f64>]) -> Result<f64> {
    let c = model.loading();
    let k_tilde = DVector::from_iterator(
        model.num_latents(),
        model.kernels().iter().map(|k| k.prior_variance()),
    );
    let cov = symmetrize(&(c * DMatrix::from_diagonal(&k_tilde) * c.transpose()))
        + DMatrix::from_diagonal(&model.noise_diagonal());
    let mut total = 0.0;
    for y in ys {
        if y.len() != model.dims() {
            return Err(crate::Error::Shape(format!(
                "observation has {} dimensions, model expects {}",
                y.len(),
                model.dims()
            )));
        }
        let rows = observed_rows(y);
        let v = DVector::from_fn(rows.len(), |i, _| y[rows[i]] - model.offset()[rows[i]]);
        let s = cov.select_rows(&rows).select_columns(&rows);
        total += gaussian_log_density(&v, &s)?;
    }
    Ok(total)
}
