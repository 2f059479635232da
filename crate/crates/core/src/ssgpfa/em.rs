use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::latent::{latent_moments, predictive_log_likelihood, scalar_update, Projection};
use super::{assemble_joint, Mode, NoiseModel, OnlineScorer, SsgpfaModel};
use crate::error::{Error, Result};
use crate::kalman::{
    check_time, filter_batch, observed_rows, predict, rts_smooth, GaussianState, RobustConfig,
    TransitionCache,
};
use crate::kernels::{DiscretizedTransition, KernelExpr, StateSpaceKernel};

const RIDGE: f64 = 1e-9;

/// Smoothed posterior over the latent values at every time step.
#[derive(Debug, Clone)]
pub struct LatentPosterior {
    /// `μ_t`, length K.
    pub means: Vec<DVector<f64>>,
    /// `Σ_t`, K×K.
    pub covs: Vec<DMatrix<f64>>,
    /// Smoothed state of each latent's block, indexed `[k][t]`.
    pub latent_states: Vec<Vec<GaussianState>>,
    /// Data log-likelihood `log p(y_{1:T})` under the model used.
    pub log_likelihood: f64,
}

impl LatentPosterior {
    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }
}

/// How the E-step runs the latent chains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Inference {
    /// One filter/smoother over the stacked state of all latents.
    Joint,
    /// Independent filters on the projected observations; exact only for an
    /// orthonormal loading and isotropic noise.
    PerLatent,
}

/// E-step with the inference scheme implied by the model's mode.
pub fn e_step(model: &SsgpfaModel, times: &[f64], ys: &[DVector<f64>]) -> Result<LatentPosterior> {
    let inference = match model.mode() {
        Mode::Orthogonal => Inference::PerLatent,
        Mode::Unconstrained => Inference::Joint,
    };
    e_step_with(model, times, ys, inference)
}

pub fn e_step_with(
    model: &SsgpfaModel,
    times: &[f64],
    ys: &[DVector<f64>],
    inference: Inference,
) -> Result<LatentPosterior> {
    check_series(model, times, ys)?;
    match inference {
        Inference::Joint => e_step_joint(model, times, ys),
        Inference::PerLatent => e_step_per_latent(model, times, ys),
    }
}

fn check_series(model: &SsgpfaModel, times: &[f64], ys: &[DVector<f64>]) -> Result<()> {
    if times.len() != ys.len() {
        return Err(Error::Shape(format!(
            "{} timestamps for {} observations",
            times.len(),
            ys.len()
        )));
    }
    if let Some((t, y)) = ys.iter().enumerate().find(|(_, y)| y.len() != model.dims()) {
        return Err(Error::Shape(format!(
            "observation {t} has {} dimensions, model expects {}",
            y.len(),
            model.dims()
        )));
    }
    for (i, &t) in times.iter().enumerate() {
        check_time(i.checked_sub(1).map(|j| times[j]), t, i)?;
    }
    Ok(())
}

fn e_step_joint(model: &SsgpfaModel, times: &[f64], ys: &[DVector<f64>]) -> Result<LatentPosterior> {
    let joint = assemble_joint(model)?;
    let filtered = filter_batch(&joint, times, ys)?;
    let smoothed = rts_smooth(&filtered.filtered, &filtered.transitions)?;
    let k = model.num_latents();
    let mut out = LatentPosterior {
        means: Vec::with_capacity(times.len()),
        covs: Vec::with_capacity(times.len()),
        latent_states: vec![Vec::with_capacity(times.len()); k],
        log_likelihood: filtered.log_likelihood,
    };
    for state in &smoothed {
        let (m, c) = joint.latent_moments(state);
        out.means.push(m);
        out.covs.push(c);
        for (j, states) in out.latent_states.iter_mut().enumerate() {
            states.push(joint.block(state, j));
        }
    }
    Ok(out)
}

struct ChainOutput {
    predictive: Vec<(f64, f64)>,
    smoothed: Vec<GaussianState>,
}

fn run_chain(
    kernel: &StateSpaceKernel,
    times: &[f64],
    projections: &[Projection],
    k: usize,
    sigma2: f64,
) -> Result<ChainOutput> {
    let h = kernel.emission();
    let mut cache = TransitionCache::default();
    let mut state = GaussianState::new(DVector::zeros(kernel.state_dim()), kernel.initial_cov().clone());
    let mut predictive = Vec::with_capacity(times.len());
    let mut filtered = Vec::with_capacity(times.len());
    let mut transitions: Vec<DiscretizedTransition> = Vec::with_capacity(times.len());
    for (t, proj) in projections.iter().enumerate() {
        let dt = if t == 0 { 0.0 } else { times[t] - times[t - 1] };
        let trans = cache.get(dt, |dt| kernel.discretize(dt))?.clone();
        let pred = predict(&state, &trans)?;
        let (m, s) = latent_moments(&pred, h);
        let u = proj.u[k];
        state = if u.is_nan() {
            pred
        } else {
            let r = sigma2 * proj.noise_scale[k];
            if !(s + r > 0.0) {
                return Err(Error::degenerate("projected innovation variance")
                    .at_time(t)
                    .for_latent(k));
            }
            scalar_update(&pred, h, u, r)
        };
        predictive.push((m, s));
        filtered.push(state.clone());
        transitions.push(trans);
    }
    let smoothed = rts_smooth(&filtered, &transitions).map_err(|e| e.for_latent(k))?;
    Ok(ChainOutput {
        predictive,
        smoothed,
    })
}

fn isotropic_noise(model: &SsgpfaModel) -> Result<f64> {
    match model.noise() {
        NoiseModel::Isotropic(v) => Ok(*v),
        NoiseModel::Diagonal(_) => Err(Error::UnsupportedCombination(
            "per-latent inference needs isotropic noise".into(),
        )),
    }
}

fn e_step_per_latent(model: &SsgpfaModel, times: &[f64], ys: &[DVector<f64>]) -> Result<LatentPosterior> {
    if model.mode() != Mode::Orthogonal {
        return Err(Error::UnsupportedCombination(
            "per-latent inference needs an orthonormal loading matrix".into(),
        ));
    }
    let sigma2 = isotropic_noise(model)?;
    let c = model.loading();
    let d = model.offset();
    let projections: Vec<Projection> = ys
        .iter()
        .map(|y| Projection::compute(c, d, y, observed_rows(y)))
        .collect();
    let chains = model
        .kernels()
        .par_iter()
        .enumerate()
        .map(|(k, kernel)| run_chain(kernel, times, &projections, k, sigma2))
        .collect::<Result<Vec<_>>>()?;

    let kk = model.num_latents();
    let mut log_likelihood = 0.0;
    let mut means = Vec::with_capacity(times.len());
    let mut covs = Vec::with_capacity(times.len());
    for (t, (y, proj)) in ys.iter().zip(&projections).enumerate() {
        let m = DVector::from_fn(kk, |k, _| chains[k].predictive[t].0);
        let s = DVector::from_fn(kk, |k, _| chains[k].predictive[t].1);
        let (ll, _) = predictive_log_likelihood(c, d, sigma2, &m, &s, y, proj).map_err(|e| e.at_time(t))?;
        log_likelihood += ll;
        let mut mean = DVector::zeros(kk);
        let mut cov = DMatrix::zeros(kk, kk);
        for (k, chain) in chains.iter().enumerate() {
            let (mk, sk) = latent_moments(&chain.smoothed[t], model.kernels()[k].emission());
            mean[k] = mk;
            cov[(k, k)] = sk;
        }
        means.push(mean);
        covs.push(cov);
    }
    Ok(LatentPosterior {
        means,
        covs,
        latent_states: chains.into_iter().map(|c| c.smoothed).collect(),
        log_likelihood,
    })
}

/// Closed-form maximizer of the expected complete-data log-likelihood.
#[derive(Debug, Clone)]
pub struct MStepUpdate {
    pub loading: DMatrix<f64>,
    pub offset: DVector<f64>,
    /// Diagonal of Ψ.
    pub noise: DVector<f64>,
}

/// Jointly maximize over `(C, d)` row by row, then update `Ψ` with the new
/// `(C, d)`. Missing entries are excluded from their row's sums.
pub fn m_step(posterior: &LatentPosterior, ys: &[DVector<f64>]) -> Result<MStepUpdate> {
    check_posterior(posterior, ys)?;
    let dims = ys[0].len();
    let k = posterior.means[0].len();
    let full = augmented_moments(posterior, ys, None);
    let mut loading = DMatrix::zeros(dims, k);
    let mut offset = DVector::zeros(dims);
    for i in 0..dims {
        let complete = ys.iter().all(|y| !y[i].is_nan());
        let own;
        let moments = if complete {
            &full
        } else {
            own = augmented_moments(posterior, ys, Some(i));
            &own
        };
        let rhs = cross_moment(posterior, ys, i);
        let sol = solve_spd(moments, &rhs)?;
        for j in 0..k {
            loading[(i, j)] = sol[j];
        }
        offset[i] = sol[k];
    }
    let (sums, counts) = residual_sums(posterior, ys, &loading, &offset)?;
    let noise = sums.component_div(&counts);
    Ok(MStepUpdate {
        loading,
        offset,
        noise,
    })
}

fn check_posterior(posterior: &LatentPosterior, ys: &[DVector<f64>]) -> Result<()> {
    if posterior.len() != ys.len() || ys.is_empty() {
        return Err(Error::Shape(format!(
            "posterior over {} steps for {} observations",
            posterior.len(),
            ys.len()
        )));
    }
    Ok(())
}

/// `Σ_t E[z̃ z̃ᵀ]` with `z̃ = [z; 1]`, over the steps where dimension `row` is
/// observed (all steps when `row` is `None`).
fn augmented_moments(posterior: &LatentPosterior, ys: &[DVector<f64>], row: Option<usize>) -> DMatrix<f64> {
    let k = posterior.means[0].len();
    let mut a = DMatrix::zeros(k + 1, k + 1);
    for (t, y) in ys.iter().enumerate() {
        if row.is_some_and(|i| y[i].is_nan()) {
            continue;
        }
        let mu = &posterior.means[t];
        let second = &posterior.covs[t] + mu * mu.transpose();
        let mut block = a.view_mut((0, 0), (k, k));
        block += &second;
        for j in 0..k {
            a[(j, k)] += mu[j];
            a[(k, j)] += mu[j];
        }
        a[(k, k)] += 1.0;
    }
    a
}

fn cross_moment(posterior: &LatentPosterior, ys: &[DVector<f64>], i: usize) -> DVector<f64> {
    let k = posterior.means[0].len();
    let mut b = DVector::zeros(k + 1);
    for (t, y) in ys.iter().enumerate() {
        if y[i].is_nan() {
            continue;
        }
        for j in 0..k {
            b[j] += y[i] * posterior.means[t][j];
        }
        b[k] += y[i];
    }
    b
}

fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        return Ok(ch.solve(b));
    }
    warn!("second-moment matrix is singular; adding a {RIDGE:e} ridge");
    let n = a.nrows();
    (a + DMatrix::<f64>::identity(n, n) * RIDGE)
        .cholesky()
        .map(|ch| ch.solve(b))
        .ok_or_else(|| Error::degenerate("latent second-moment matrix"))
}

/// Per-dimension `Σ_t E[(y_it − c_iᵀz_t − d_i)²]` over observed steps, and
/// the observation counts.
fn residual_sums(
    posterior: &LatentPosterior,
    ys: &[DVector<f64>],
    c: &DMatrix<f64>,
    d: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let dims = c.nrows();
    let mut sums = DVector::zeros(dims);
    let mut counts = DVector::zeros(dims);
    for (t, y) in ys.iter().enumerate() {
        let mu = &posterior.means[t];
        let cs = c * &posterior.covs[t];
        let pred = c * mu + d;
        for i in 0..dims {
            if y[i].is_nan() {
                continue;
            }
            let r = y[i] - pred[i];
            sums[i] += r * r + cs.row(i).dot(&c.row(i));
            counts[i] += 1.0;
        }
    }
    if let Some(i) = counts.iter().position(|n| *n == 0.0) {
        return Err(Error::Input(format!("dimension {i} has no observations")));
    }
    Ok((sums, counts))
}

/// Offset maximizing the expected complete-data log-likelihood for a fixed
/// loading: `d_i = mean_t (y_it − c_iᵀμ_t)` over observed steps.
pub fn update_offset(posterior: &LatentPosterior, ys: &[DVector<f64>], c: &DMatrix<f64>) -> Result<DVector<f64>> {
    check_posterior(posterior, ys)?;
    let dims = c.nrows();
    let mut sums = DVector::zeros(dims);
    let mut counts = DVector::<f64>::zeros(dims);
    for (t, y) in ys.iter().enumerate() {
        let pred = c * &posterior.means[t];
        for i in 0..dims {
            if !y[i].is_nan() {
                sums[i] += y[i] - pred[i];
                counts[i] += 1.0;
            }
        }
    }
    if let Some(i) = counts.iter().position(|n| *n == 0.0) {
        return Err(Error::Input(format!("dimension {i} has no observations")));
    }
    Ok(sums.component_div(&counts))
}

/// Closest matrix with orthonormal columns in Frobenius norm: `U Vᵀ` from the
/// thin SVD `C* = U S Vᵀ`.
pub fn orthogonalize(c_star: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (d, k) = c_star.shape();
    if k > d {
        return Err(Error::Shape(format!("cannot orthonormalize {k} columns in dimension {d}")));
    }
    if c_star.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("non-finite loading matrix".into()));
    }
    let svd = c_star.clone().svd(true, true);
    let smallest = svd.singular_values.iter().copied().fold(f64::INFINITY, f64::min);
    let largest = svd.singular_values.amax();
    if !(smallest > 1e-12 * largest.max(f64::MIN_POSITIVE)) {
        return Err(Error::DegenerateLoading {
            smallest_singular_value: smallest,
        });
    }
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    Ok(u * v_t)
}

#[derive(Debug, Clone)]
pub struct EmConfig {
    pub latents: Vec<KernelExpr>,
    pub mode: Mode,
    pub max_iters: usize,
    /// Stop once the relative change of the log-likelihood falls below this.
    pub tol: f64,
    /// When set, training points the current model would reject are treated
    /// as missing in each E-step.
    pub robust_training: Option<RobustConfig>,
}

impl EmConfig {
    pub const DEFAULT_MAX_ITERS: usize = 50;
    pub const DEFAULT_TOL: f64 = 1e-6;

    pub fn new(latents: Vec<KernelExpr>, mode: Mode) -> Self {
        Self {
            latents,
            mode,
            max_iters: Self::DEFAULT_MAX_ITERS,
            tol: Self::DEFAULT_TOL,
            robust_training: None,
        }
    }
}

/// State handed to an observer after each EM iteration.
#[derive(Debug)]
pub struct EmIteration<'a> {
    pub iteration: usize,
    pub model: &'a SsgpfaModel,
    pub posterior: &'a LatentPosterior,
    pub log_likelihood: f64,
}

pub fn fit_em(times: &[f64], ys: &[DVector<f64>], config: &EmConfig) -> Result<SsgpfaModel> {
    fit_em_with_observer(times, ys, config, |_| {})
}

/// EM training. `training_log[i]` is the data log-likelihood after `i`
/// M-steps (entry 0 is the initialization).
pub fn fit_em_with_observer(
    times: &[f64],
    ys: &[DVector<f64>],
    config: &EmConfig,
    observer: impl FnMut(&EmIteration),
) -> Result<SsgpfaModel> {
    let model = initialize(ys, &config.latents, config.mode)?;
    run_em(model, times, ys, config, observer)
}

/// EM started from `model` instead of the SVD initialization. The kernels
/// and mode of `model` are used; those in `config` are ignored.
pub fn fit_em_from(
    model: SsgpfaModel,
    times: &[f64],
    ys: &[DVector<f64>],
    config: &EmConfig,
) -> Result<SsgpfaModel> {
    run_em(model, times, ys, config, |_| {})
}

fn run_em(
    mut model: SsgpfaModel,
    times: &[f64],
    ys: &[DVector<f64>],
    config: &EmConfig,
    mut observer: impl FnMut(&EmIteration),
) -> Result<SsgpfaModel> {
    check_series(&model, times, ys)?;
    let mut posterior = training_e_step(&model, times, ys, config)?;
    let mut log = vec![finite_ll(posterior.log_likelihood, 0)?];
    for iteration in 1..=config.max_iters {
        let ys_used = training_view(&model, times, ys, config)?;
        let ys_used = ys_used.as_deref().unwrap_or(ys);
        model = maximize(&model, &posterior, ys_used)?;
        posterior = training_e_step(&model, times, ys, config)?;
        let ll = finite_ll(posterior.log_likelihood, iteration)?;
        let prev = *log.last().expect("log starts non-empty");
        log.push(ll);
        debug!("EM iteration {iteration}: log-likelihood {ll:.6}");
        observer(&EmIteration {
            iteration,
            model: &model,
            posterior: &posterior,
            log_likelihood: ll,
        });
        if ((ll - prev) / prev.abs().max(f64::MIN_POSITIVE)).abs() < config.tol {
            break;
        }
    }
    model.training_log = log;
    Ok(model)
}

fn finite_ll(ll: f64, iteration: usize) -> Result<f64> {
    if ll.is_finite() {
        Ok(ll)
    } else {
        Err(Error::NonFiniteLikelihood { iteration })
    }
}

fn training_e_step(
    model: &SsgpfaModel,
    times: &[f64],
    ys: &[DVector<f64>],
    config: &EmConfig,
) -> Result<LatentPosterior> {
    match training_view(model, times, ys, config)? {
        Some(masked) => e_step(model, times, &masked),
        None => e_step(model, times, ys),
    }
}

/// Training data with robustly rejected points masked, if robust training is on.
fn training_view(
    model: &SsgpfaModel,
    times: &[f64],
    ys: &[DVector<f64>],
    config: &EmConfig,
) -> Result<Option<Vec<DVector<f64>>>> {
    let Some(robust) = config.robust_training else {
        return Ok(None);
    };
    let mut scorer = OnlineScorer::new(model, robust)?;
    let mut out = Vec::with_capacity(ys.len());
    for (&t, y) in times.iter().zip(ys) {
        let p = scorer.step(t, y)?;
        out.push(if p.accepted || p.observed == 0 {
            y.clone()
        } else {
            DVector::from_element(y.len(), f64::NAN)
        });
    }
    Ok(Some(out))
}

fn maximize(model: &SsgpfaModel, posterior: &LatentPosterior, ys: &[DVector<f64>]) -> Result<SsgpfaModel> {
    let update = m_step(posterior, ys)?;
    match model.mode() {
        Mode::Unconstrained => model.with_parameters(
            update.loading,
            update.offset,
            NoiseModel::Diagonal(update.noise.iter().copied().collect()),
        ),
        Mode::Orthogonal => {
            let c = orthogonalize(&update.loading)?;
            let d = update_offset(posterior, ys, &c)?;
            let (sums, counts) = residual_sums(posterior, ys, &c, &d)?;
            let sigma2 = sums.sum() / counts.sum();
            model.with_parameters(c, d, NoiseModel::Isotropic(sigma2))
        }
    }
}

/// Deterministic starting point: top-K left singular vectors of the centred
/// data, per-dimension means as offset, residual variance as noise.
pub fn initialize(ys: &[DVector<f64>], latents: &[KernelExpr], mode: Mode) -> Result<SsgpfaModel> {
    if ys.len() < 2 {
        return Err(Error::Input(format!(
            "training needs at least 2 time steps, got {}",
            ys.len()
        )));
    }
    let dims = ys[0].len();
    let k = latents.len();
    if k > dims {
        return Err(Error::Config(format!(
            "number of latents ({k}) exceeds observed dimension ({dims})"
        )));
    }
    let n = ys.len();
    let mut mean = DVector::zeros(dims);
    let mut counts = DVector::<f64>::zeros(dims);
    for y in ys {
        if y.len() != dims {
            return Err(Error::Shape("observations have inconsistent dimension".into()));
        }
        for i in 0..dims {
            if !y[i].is_nan() {
                mean[i] += y[i];
                counts[i] += 1.0;
            }
        }
    }
    if let Some(i) = counts.iter().position(|c| *c == 0.0) {
        return Err(Error::Input(format!("dimension {i} has no observations")));
    }
    mean.component_div_assign(&counts);
    let x = DMatrix::from_fn(dims, n, |i, t| {
        let v = ys[t][i];
        if v.is_nan() {
            0.0
        } else {
            v - mean[i]
        }
    });
    let svd = x.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let c = DMatrix::from_fn(dims, k, |i, j| u[(i, order[j])]);

    let resid = &x - &c * (c.transpose() * &x);
    let row_var = DVector::from_fn(dims, |i, _| x.row(i).norm_squared() / counts[i]);
    let floor = 1e-3 * row_var.mean().max(1e-5);
    let resid_var = DVector::from_fn(dims, |i, _| (resid.row(i).norm_squared() / counts[i]).max(floor));
    let noise = match mode {
        Mode::Orthogonal => NoiseModel::Isotropic(resid_var.mean()),
        Mode::Unconstrained => NoiseModel::Diagonal(resid_var.iter().copied().collect()),
    };
    SsgpfaModel::new(latents.to_vec(), c, mean, noise, mode)
}
