//! Per-latent filtering under an orthonormal loading matrix.
//!
//! With `CᵀC = I` and isotropic noise, `u = Cᵀ(y − d)` splits the observation
//! into K independent scalar observations `u_k = z_k + η_k`, `η_k ~ N(0, σ²)`,
//! plus a residual orthogonal to the latent subspace that carries no
//! information about `z`.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::kalman::GaussianState;
use crate::linalg::{gaussian_log_density, scalar_log_density, symmetrize, LN_2PI};

/// Latent-space view of one observation.
#[derive(Debug, Clone)]
pub(crate) struct Projection {
    /// Projected observation per latent (`NaN` when latent `k` has no observed loadings).
    pub u: DVector<f64>,
    /// Noise variance of each `u_k` relative to σ² (1 when fully observed).
    pub noise_scale: DVector<f64>,
    pub observed: Vec<usize>,
}

impl Projection {
    pub fn compute(c: &DMatrix<f64>, d: &DVector<f64>, y: &DVector<f64>, observed: Vec<usize>) -> Self {
        let k = c.ncols();
        if observed.len() == y.len() {
            let r = y - d;
            return Self {
                u: c.tr_mul(&r),
                noise_scale: DVector::from_element(k, 1.0),
                observed,
            };
        }
        let mut u = DVector::from_element(k, f64::NAN);
        let mut noise_scale = DVector::from_element(k, f64::INFINITY);
        for j in 0..k {
            let mut dot = 0.0;
            let mut norm = 0.0;
            for &i in &observed {
                dot += c[(i, j)] * (y[i] - d[i]);
                norm += c[(i, j)] * c[(i, j)];
            }
            if norm > 0.0 {
                u[j] = dot / norm;
                noise_scale[j] = 1.0 / norm;
            }
        }
        Self {
            u,
            noise_scale,
            observed,
        }
    }

    pub fn is_complete(&self, dims: usize) -> bool {
        self.observed.len() == dims
    }
}

/// Scalar Joseph-form update with observation `u = hᵀx + η`, `η ~ N(0, r)`.
pub(crate) fn scalar_update(state: &GaussianState, h: &DVector<f64>, u: f64, r: f64) -> GaussianState {
    let ph = &state.cov * h;
    let s = h.dot(&ph) + r;
    let gain = ph / s;
    let v = u - h.dot(&state.mean);
    let n = state.dim();
    let i_kh = DMatrix::<f64>::identity(n, n) - &gain * h.transpose();
    let cov = &i_kh * &state.cov * i_kh.transpose() + &gain * gain.transpose() * r;
    GaussianState {
        mean: &state.mean + gain * v,
        cov: symmetrize(&cov),
        last_accepted_time: state.last_accepted_time,
    }
}

/// Predictive mean and variance `hᵀm`, `hᵀPh` of a latent value.
pub(crate) fn latent_moments(state: &GaussianState, h: &DVector<f64>) -> (f64, f64) {
    (h.dot(&state.mean), h.dot(&(&state.cov * h)))
}

/// Joint and per-dimension predictive log-densities of `y` when the latent
/// predictive distribution is `N(m, diag(s))`, loading `C` is orthonormal and
/// noise is `σ² I`.
pub(crate) fn predictive_log_likelihood(
    c: &DMatrix<f64>,
    d: &DVector<f64>,
    sigma2: f64,
    m: &DVector<f64>,
    s: &DVector<f64>,
    y: &DVector<f64>,
    proj: &Projection,
) -> Result<(f64, DVector<f64>)> {
    let dims = y.len();
    let k = c.ncols();
    let mut marginals = DVector::from_element(dims, f64::NAN);
    let mean = c * m + d;
    for &i in &proj.observed {
        let var = (0..k).map(|j| c[(i, j)] * c[(i, j)] * s[j]).sum::<f64>() + sigma2;
        marginals[i] = scalar_log_density(y[i] - mean[i], var);
    }
    if proj.observed.is_empty() {
        return Ok((0.0, marginals));
    }
    if proj.is_complete(dims) {
        let r = y - d;
        let perp = &r - c * &proj.u;
        let mut ll = -0.5 * ((dims - k) as f64 * (LN_2PI + sigma2.ln()) + perp.norm_squared() / sigma2);
        for j in 0..k {
            ll += scalar_log_density(proj.u[j] - m[j], s[j] + sigma2);
        }
        return Ok((ll, marginals));
    }
    let o = &proj.observed;
    let c_o = DMatrix::from_fn(o.len(), k, |i, j| c[(o[i], j)]);
    let mut cov = &c_o * DMatrix::from_diagonal(s) * c_o.transpose();
    for i in 0..o.len() {
        cov[(i, i)] += sigma2;
    }
    let v = DVector::from_fn(o.len(), |i, _| y[o[i]] - mean[o[i]]);
    Ok((gaussian_log_density(&v, &symmetrize(&cov))?, marginals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kalman::{update, LinearObservationModel};

    #[test]
    fn scalar_update_matches_general_update() {
        let state = GaussianState::new(
            DVector::from_vec(vec![0.3, -0.1]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]),
        );
        let h = DVector::from_vec(vec![1.0, 0.0]);
        let a = scalar_update(&state, &h, 0.8, 0.3);
        let obs = LinearObservationModel::new(
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DVector::from_element(1, 0.3),
            DVector::zeros(1),
        )
        .unwrap();
        let b = update(&state, &DVector::from_element(1, 0.8), &obs).unwrap().state;
        assert!((&a.mean - &b.mean).amax() < 1e-14);
        assert!((&a.cov - &b.cov).amax() < 1e-14);
    }

    #[test]
    fn complete_and_dense_likelihoods_agree() {
        let c = DMatrix::from_row_slice(3, 2, &[0.6, 0.0, 0.8, 0.0, 0.0, 1.0]);
        let d = DVector::from_vec(vec![0.1, -0.2, 0.3]);
        let m = DVector::from_vec(vec![0.5, -0.4]);
        let s = DVector::from_vec(vec![0.7, 1.3]);
        let y = DVector::from_vec(vec![0.9, 0.2, -1.0]);
        let sigma2 = 0.2;
        let full = Projection::compute(&c, &d, &y, vec![0, 1, 2]);
        let (ll, marg) = predictive_log_likelihood(&c, &d, sigma2, &m, &s, &y, &full).unwrap();
        let cov = &c * DMatrix::from_diagonal(&s) * c.transpose() + DMatrix::<f64>::identity(3, 3) * sigma2;
        let want = gaussian_log_density(&(&y - &c * &m - &d), &cov).unwrap();
        assert!((ll - want).abs() < 1e-12);
        assert!((marg[2] - scalar_log_density(y[2] - m[1] - d[2], 1.3 + sigma2)).abs() < 1e-12);
    }
}
