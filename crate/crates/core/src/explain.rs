//! Attribution of observations to latent processes.
//!
//! An observation is projected onto the latent subspace, `v = argmin ‖(y − d) − C v‖`,
//! and each coordinate `v_k` is scored under latent `k`'s predictive
//! distribution. The residual norm measures how much of the observation lies
//! outside the span of `C`.

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kalman::observed_rows;
use crate::linalg::scalar_log_density;
use crate::ssgpfa::{Mode, SsgpfaModel};

#[derive(Debug, Clone, PartialEq)]
pub struct Attribution {
    /// Least-squares latent values `v_t`.
    pub projected_latents: DVector<f64>,
    /// `−log N(v_k; m_k, s_k + noise_k)` for each latent.
    pub per_latent_nll: DVector<f64>,
    /// `‖(y − d) − C v‖₂` over the observed entries.
    pub reconstruction_error: f64,
}

impl Attribution {
    /// Index of the latent with the largest attribution score.
    pub fn dominant_latent(&self) -> Option<usize> {
        self.per_latent_nll.argmax_finite()
    }
}

trait ArgmaxFinite {
    fn argmax_finite(&self) -> Option<usize>;
}

impl ArgmaxFinite for DVector<f64> {
    fn argmax_finite(&self) -> Option<usize> {
        self.iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
    }
}

/// Least-squares latent values for `y`; missing entries are ignored.
///
/// Uses `Cᵀ(y − d)` for orthogonal models and the normal equations otherwise.
pub fn project_latents(model: &SsgpfaModel, y: &DVector<f64>) -> Result<DVector<f64>> {
    if model.mode() == Mode::Unconstrained {
        warn!("loading matrix is not orthonormal; projecting with the normal equations");
    }
    let p = Projector::new(model)?;
    check_len(model, y)?;
    p.solve(y, &observed_rows(y))
        .map(|(v, _, _)| v)
        .ok_or_else(|| Error::degenerate("loading matrix restricted to observed entries"))
}

/// Attribution of `y` given each latent's predictive mean and variance.
/// Returns `None` when the observed entries cannot determine `v`.
pub fn attribute(
    model: &SsgpfaModel,
    y: &DVector<f64>,
    latent_mean: &DVector<f64>,
    latent_var: &DVector<f64>,
) -> Result<Option<Attribution>> {
    check_len(model, y)?;
    if latent_mean.len() != model.num_latents() || latent_var.len() != model.num_latents() {
        return Err(Error::Shape(format!(
            "latent predictive of length {}/{} for {} latents",
            latent_mean.len(),
            latent_var.len(),
            model.num_latents()
        )));
    }
    Ok(Projector::new(model)?.attribute(y, latent_mean, latent_var))
}

fn check_len(model: &SsgpfaModel, y: &DVector<f64>) -> Result<()> {
    if y.len() != model.dims() {
        return Err(Error::Shape(format!(
            "observation has {} dimensions, model expects {}",
            y.len(),
            model.dims()
        )));
    }
    Ok(())
}

/// Precomputed projection for fully observed points.
#[derive(Debug, Clone)]
pub(crate) struct Projector {
    c: DMatrix<f64>,
    d: DVector<f64>,
    psi: DVector<f64>,
    orthogonal: bool,
    /// `(CᵀC)⁻¹Cᵀ`.
    pinv: DMatrix<f64>,
    /// Diagonal of the projected noise covariance `(CᵀC)⁻¹CᵀΨC(CᵀC)⁻¹`.
    noise: DVector<f64>,
}

impl Projector {
    pub fn new(model: &SsgpfaModel) -> Result<Self> {
        let c = model.loading().clone();
        let psi = model.noise_diagonal();
        let orthogonal = model.mode() == Mode::Orthogonal;
        let (pinv, noise) = if orthogonal {
            (c.transpose(), DVector::from_element(c.ncols(), psi[0]))
        } else {
            let all: Vec<usize> = (0..c.nrows()).collect();
            projection(&c, &psi, &all).ok_or(Error::DegenerateLoading {
                smallest_singular_value: c.singular_values().min(),
            })?
        };
        Ok(Self {
            d: model.offset().clone(),
            c,
            psi,
            orthogonal,
            pinv,
            noise,
        })
    }

    /// `(v, projected noise variance, reconstruction error)`.
    pub fn solve(&self, y: &DVector<f64>, observed: &[usize]) -> Option<(DVector<f64>, DVector<f64>, f64)> {
        if observed.len() == y.len() {
            let r = y - &self.d;
            let v = if self.orthogonal {
                self.c.tr_mul(&r)
            } else {
                &self.pinv * &r
            };
            let err = (&r - &self.c * &v).norm();
            return Some((v, self.noise.clone(), err));
        }
        if observed.len() < self.c.ncols() {
            return None;
        }
        let (pinv, noise) = projection(&self.c, &self.psi, observed)?;
        let r = DVector::from_fn(observed.len(), |i, _| y[observed[i]] - self.d[observed[i]]);
        let v = &pinv * &r;
        let c_o = self.c.select_rows(observed);
        let err = (&r - c_o * &v).norm();
        Some((v, noise, err))
    }

    pub fn attribute(&self, y: &DVector<f64>, mean: &DVector<f64>, var: &DVector<f64>) -> Option<Attribution> {
        let (v, noise, err) = self.solve(y, &observed_rows(y))?;
        let nll = DVector::from_fn(v.len(), |k, _| -scalar_log_density(v[k] - mean[k], var[k] + noise[k]));
        Some(Attribution {
            projected_latents: v,
            per_latent_nll: nll,
            reconstruction_error: err,
        })
    }
}

/// Least-squares projector onto the columns of `C` restricted to `rows` and
/// the diagonal of the noise it carries into `v`.
fn projection(c: &DMatrix<f64>, psi: &DVector<f64>, rows: &[usize]) -> Option<(DMatrix<f64>, DVector<f64>)> {
    let c_o = c.select_rows(rows);
    let gram = c_o.tr_mul(&c_o);
    let chol = gram.cholesky()?;
    let pinv = chol.solve(&c_o.transpose());
    let noise = DVector::from_fn(c.ncols(), |k, _| {
        rows.iter()
            .enumerate()
            .map(|(j, &i)| pinv[(k, j)] * pinv[(k, j)] * psi[i])
            .sum()
    });
    Some((pinv, noise))
}
