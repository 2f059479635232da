//! Dense Gaussian-process reference computations, written from the kernel
//! formulas without any state-space machinery.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use ssgpfa::kernels::KernelExpr;
use ssgpfa::ssgpfa::SsgpfaModel;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Covariance between the latent at times `s` and `t` for a process
/// started at `t0` (only Brownian motion depends on `t0`).
pub fn kernel_cov(e: &KernelExpr, s: f64, t: f64, t0: f64) -> f64 {
    let tau = (s - t).abs();
    match e {
        KernelExpr::Matern32 { lengthscale, variance } => {
            let r = 3f64.sqrt() * tau / lengthscale;
            variance * (1.0 + r) * (-r).exp()
        }
        KernelExpr::Cosine { period, variance } => variance * (2.0 * std::f64::consts::PI * tau / period).cos(),
        KernelExpr::Brownian { diffusion } => diffusion * (s.min(t) - t0),
        KernelExpr::Sum(a, b) => kernel_cov(a, s, t, t0) + kernel_cov(b, s, t, t0),
        KernelExpr::Product(a, b) => kernel_cov(a, s, t, t0) * kernel_cov(b, s, t, t0),
    }
}

/// Observed entries `(t, i)` in time-major order.
pub fn observed(ys: &[DVector<f64>]) -> Vec<(usize, usize)> {
    ys.iter()
        .enumerate()
        .flat_map(|(t, y)| (0..y.len()).filter(move |&i| !y[i].is_nan()).map(move |i| (t, i)))
        .collect()
}

/// Covariance of the observed entries and of latent values against them.
pub struct Dense {
    pub entries: Vec<(usize, usize)>,
    pub resid: DVector<f64>,
    pub cov: DMatrix<f64>,
}

pub fn dense(model: &SsgpfaModel, times: &[f64], ys: &[DVector<f64>]) -> Dense {
    let entries = observed(ys);
    let c = model.loading();
    let r = model.noise_diagonal();
    let t0 = times[0];
    let n = entries.len();
    let mut cov = DMatrix::zeros(n, n);
    for (a, &(s, i)) in entries.iter().enumerate() {
        for (b, &(t, j)) in entries.iter().enumerate() {
            let mut v = 0.0;
            for (k, e) in model.latents().iter().enumerate() {
                v += c[(i, k)] * c[(j, k)] * kernel_cov(e, times[s], times[t], t0);
            }
            if a == b {
                v += r[i];
            }
            cov[(a, b)] = v;
        }
    }
    let resid = DVector::from_fn(n, |a, _| {
        let (t, i) = entries[a];
        ys[t][i] - model.offset()[i]
    });
    Dense { entries, resid, cov }
}

/// Exact marginal log-likelihood of the observed entries.
pub fn dense_log_likelihood(model: &SsgpfaModel, times: &[f64], ys: &[DVector<f64>]) -> f64 {
    let d = dense(model, times, ys);
    let n = d.resid.len() as f64;
    let chol = d.cov.clone().cholesky().expect("positive definite");
    let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let quad = d.resid.dot(&chol.solve(&d.resid));
    -0.5 * (n * (2.0 * std::f64::consts::PI).ln() + logdet + quad)
}

/// Exact posterior mean of every latent at every time, `[t][k]`.
pub fn dense_latent_means(model: &SsgpfaModel, times: &[f64], ys: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let d = dense(model, times, ys);
    let alpha = d.cov.clone().cholesky().expect("positive definite").solve(&d.resid);
    let c = model.loading();
    let t0 = times[0];
    (0..times.len())
        .map(|t| {
            DVector::from_fn(model.num_latents(), |k, _| {
                let e = &model.latents()[k];
                d.entries
                    .iter()
                    .enumerate()
                    .map(|(a, &(s, i))| c[(i, k)] * kernel_cov(e, times[t], times[s], t0) * alpha[a])
                    .sum()
            })
        })
        .collect()
}

/// Random `D × K` matrix with orthonormal columns.
pub fn orthonormal(dims: usize, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(dims, k, |_, _| normal(rng)).qr().q()
}

/// Strictly increasing, irregular times starting at `start`.
pub fn irregular_times(n: usize, start: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut t = start;
    (0..n)
        .map(|_| {
            let now = t;
            t += 0.3 + 1.4 * normal(rng).abs().min(2.0);
            now
        })
        .collect()
}

/// Random observations with roughly `missing` of the entries replaced by `NaN`.
pub fn random_observations(n: usize, dims: usize, missing: f64, rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
    use rand::Rng;
    (0..n)
        .map(|_| {
            DVector::from_fn(dims, |_, _| {
                let v = normal(rng);
                if rng.random::<f64>() < missing {
                    f64::NAN
                } else {
                    v
                }
            })
        })
        .collect()
}
