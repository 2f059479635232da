use nalgebra::{DMatrix, DVector};

use super::{observed_rows, predict, GaussianState, Innovation, LinearObservationModel};
use crate::error::{Error, Result};
use crate::kernels::{DiscretizedTransition, StateSpaceKernel};

/// A linear-Gaussian state-space model whose transition depends on elapsed time.
pub trait StateSpaceModel {
    fn state_dim(&self) -> usize;
    /// Prior over the state at the first timestamp of a stream.
    fn initial_state(&self) -> GaussianState;
    fn transition(&self, dt: f64) -> Result<DiscretizedTransition>;
    fn observation(&self) -> &LinearObservationModel;
}

impl<M: StateSpaceModel + ?Sized> StateSpaceModel for &M {
    fn state_dim(&self) -> usize {
        (**self).state_dim()
    }
    fn initial_state(&self) -> GaussianState {
        (**self).initial_state()
    }
    fn transition(&self, dt: f64) -> Result<DiscretizedTransition> {
        (**self).transition(dt)
    }
    fn observation(&self) -> &LinearObservationModel {
        (**self).observation()
    }
}

/// Univariate GP `y = f(t) + ε` in state-space form.
#[derive(Debug, Clone)]
pub struct GpStateSpace {
    kernel: StateSpaceKernel,
    obs: LinearObservationModel,
}

impl GpStateSpace {
    pub fn new(kernel: StateSpaceKernel, noise_variance: f64) -> Result<Self> {
        Self::with_offset(kernel, noise_variance, 0.0)
    }

    pub fn with_offset(kernel: StateSpaceKernel, noise_variance: f64, offset: f64) -> Result<Self> {
        let h = DMatrix::from_row_slice(1, kernel.state_dim(), kernel.emission().as_slice());
        let obs = LinearObservationModel::new(
            h,
            DVector::from_element(1, noise_variance),
            DVector::from_element(1, offset),
        )?;
        Ok(Self { kernel, obs })
    }

    pub fn kernel(&self) -> &StateSpaceKernel {
        &self.kernel
    }

    pub fn noise_variance(&self) -> f64 {
        self.obs.r[0]
    }
}

impl StateSpaceModel for GpStateSpace {
    fn state_dim(&self) -> usize {
        self.kernel.state_dim()
    }

    fn initial_state(&self) -> GaussianState {
        GaussianState::new(
            DVector::zeros(self.kernel.state_dim()),
            self.kernel.initial_cov().clone(),
        )
    }

    fn transition(&self, dt: f64) -> Result<DiscretizedTransition> {
        self.kernel.discretize(dt)
    }

    fn observation(&self) -> &LinearObservationModel {
        &self.obs
    }
}

/// Remembers the most recent discretization so regularly sampled streams
/// compute the matrix exponential once.
#[derive(Debug, Clone, Default)]
pub struct TransitionCache {
    last: Option<DiscretizedTransition>,
}

impl TransitionCache {
    pub fn get(
        &mut self,
        dt: f64,
        make: impl FnOnce(f64) -> Result<DiscretizedTransition>,
    ) -> Result<&DiscretizedTransition> {
        let hit = matches!(&self.last, Some(t) if t.dt == dt);
        if !hit {
            self.last = Some(make(dt)?);
        }
        Ok(self.last.as_ref().expect("populated above"))
    }
}

/// Which likelihood the skip rule thresholds in the multivariate case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SkipRule {
    /// Skip the whole update when the joint predictive likelihood is below ρ.
    #[default]
    Joint,
    /// Drop individual dimensions whose marginal likelihood is below ρ.
    PerDimension,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustConfig {
    /// Natural log of the likelihood threshold ρ.
    pub log_rho: f64,
    pub robust: bool,
    pub rule: SkipRule,
}

/// Default likelihood threshold ρ.
pub const DEFAULT_RHO: f64 = 1e-12;

impl Default for RobustConfig {
    fn default() -> Self {
        Self::with_rho(DEFAULT_RHO)
    }
}

impl RobustConfig {
    /// Threshold on the predictive likelihood `p(y_t | y_{1:t-1})`.
    pub fn with_rho(rho: f64) -> Self {
        Self::with_log_rho(rho.ln())
    }

    pub fn with_log_rho(log_rho: f64) -> Self {
        Self {
            log_rho,
            robust: true,
            rule: SkipRule::Joint,
        }
    }

    pub fn non_robust() -> Self {
        Self {
            robust: false,
            ..Self::default()
        }
    }
}

/// Outcome of one streaming step.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterStepResult {
    pub time: f64,
    pub predicted: GaussianState,
    /// Equal to `predicted` when the update was skipped.
    pub updated: GaussianState,
    /// Joint predictive log-density of the observed entries (0 when none are observed).
    pub log_likelihood: f64,
    /// Per-dimension predictive log-densities; `NaN` for missing entries.
    pub marginal_log_likelihoods: DVector<f64>,
    pub accepted: bool,
    pub predictive_mean: DVector<f64>,
    pub predictive_var: DVector<f64>,
    /// Number of observed (non-missing) entries.
    pub observed: usize,
}

/// Streaming robust Kalman filter.
///
/// Each step predicts from the state at the last accepted observation over the
/// elapsed time, scores the observation and only folds it into the state when
/// its predictive likelihood exceeds ρ (or robustness is disabled).
#[derive(Debug, Clone)]
pub struct RobustFilter<M> {
    model: M,
    config: RobustConfig,
    state: GaussianState,
    cache: TransitionCache,
    last_time: Option<f64>,
    index: usize,
}

impl<M: StateSpaceModel> RobustFilter<M> {
    pub fn new(model: M, config: RobustConfig) -> Self {
        let state = model.initial_state();
        Self {
            model,
            config,
            state,
            cache: TransitionCache::default(),
            last_time: None,
            index: 0,
        }
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    /// Filtering distribution at the last accepted observation.
    pub fn state(&self) -> &GaussianState {
        &self.state
    }

    pub fn step(&mut self, time: f64, y: &DVector<f64>) -> Result<FilterStepResult> {
        let obs = self.model.observation();
        if y.len() != obs.obs_dim() {
            return Err(Error::Shape(format!(
                "observation of length {} for a model with {} outputs",
                y.len(),
                obs.obs_dim()
            )));
        }
        check_time(self.last_time, time, self.index)?;
        let index = self.index;
        let anchor = *self.state.last_accepted_time.get_or_insert(time);
        let model = &self.model;
        let trans = self.cache.get(time - anchor, |dt| model.transition(dt))?;
        let predicted = predict(&self.state, trans)?;
        let (predictive_mean, predictive_var) = obs.predictive(&predicted);

        let observed = observed_rows(y);
        let n_observed = observed.len();
        let innov = Innovation::compute(&predicted, y, obs, observed).map_err(|e| e.at_time(index))?;
        let log_likelihood = innov.log_likelihood();
        let mut marginal_log_likelihoods = DVector::from_element(y.len(), f64::NAN);
        for (j, &i) in innov.observed.iter().enumerate() {
            marginal_log_likelihoods[i] = crate::linalg::scalar_log_density(innov.v[j], innov.s[(j, j)]);
        }

        let use_rows: Vec<usize> = if n_observed == 0 {
            Vec::new()
        } else if !self.config.robust {
            innov.observed.clone()
        } else {
            match self.config.rule {
                SkipRule::Joint if log_likelihood > self.config.log_rho => innov.observed.clone(),
                SkipRule::Joint => Vec::new(),
                SkipRule::PerDimension => innov
                    .observed
                    .iter()
                    .copied()
                    .filter(|&i| marginal_log_likelihoods[i] > self.config.log_rho)
                    .collect(),
            }
        };

        let accepted = !use_rows.is_empty();
        let updated = if !accepted {
            predicted.clone()
        } else {
            let mut new = if use_rows.len() == n_observed {
                innov.apply(&predicted)
            } else {
                Innovation::compute(&predicted, y, obs, use_rows)
                    .map_err(|e| e.at_time(index))?
                    .apply(&predicted)
            };
            new.last_accepted_time = Some(time);
            self.state = new.clone();
            new
        };

        self.last_time = Some(time);
        self.index += 1;
        Ok(FilterStepResult {
            time,
            predicted,
            updated,
            log_likelihood,
            marginal_log_likelihoods,
            accepted,
            predictive_mean,
            predictive_var,
            observed: n_observed,
        })
    }
}

pub(crate) fn check_time(last: Option<f64>, time: f64, index: usize) -> Result<()> {
    if !time.is_finite() {
        return Err(Error::Input(format!("non-finite timestamp at index {index}")));
    }
    if let Some(prev) = last {
        if time <= prev {
            return Err(Error::Input(format!(
                "timestamps must be strictly increasing: {time} follows {prev} at index {index}"
            )));
        }
    }
    Ok(())
}

/// Run [`RobustFilter`] over a whole series.
pub fn robust_filter<M: StateSpaceModel>(
    model: M,
    times: &[f64],
    ys: &[DVector<f64>],
    config: RobustConfig,
) -> Result<Vec<FilterStepResult>> {
    if times.len() != ys.len() {
        return Err(Error::Shape(format!(
            "{} timestamps for {} observations",
            times.len(),
            ys.len()
        )));
    }
    let mut filter = RobustFilter::new(model, config);
    times
        .iter()
        .zip(ys)
        .map(|(&t, y)| filter.step(t, y))
        .collect()
}

/// Per-step outputs of a plain (non-robust) batch filter pass, as needed by
/// the smoother.
#[derive(Debug, Clone)]
pub struct BatchFilterOutput {
    pub predicted: Vec<GaussianState>,
    pub filtered: Vec<GaussianState>,
    /// `transitions[t]` maps the state at `t-1` to `t`; `transitions[0]` is the identity.
    pub transitions: Vec<DiscretizedTransition>,
    pub step_log_likelihoods: Vec<f64>,
    pub log_likelihood: f64,
}

/// Plain Kalman filter over a full batch, keeping every intermediate state.
pub fn filter_batch<M: StateSpaceModel>(
    model: &M,
    times: &[f64],
    ys: &[DVector<f64>],
) -> Result<BatchFilterOutput> {
    if times.len() != ys.len() {
        return Err(Error::Shape(format!(
            "{} timestamps for {} observations",
            times.len(),
            ys.len()
        )));
    }
    let obs = model.observation();
    let n = times.len();
    let mut out = BatchFilterOutput {
        predicted: Vec::with_capacity(n),
        filtered: Vec::with_capacity(n),
        transitions: Vec::with_capacity(n),
        step_log_likelihoods: Vec::with_capacity(n),
        log_likelihood: 0.0,
    };
    let mut cache = TransitionCache::default();
    let mut state = model.initial_state();
    for (t, (&time, y)) in times.iter().zip(ys).enumerate() {
        if y.len() != obs.obs_dim() {
            return Err(Error::Shape(format!(
                "observation {t} has length {} but the model has {} outputs",
                y.len(),
                obs.obs_dim()
            )));
        }
        let prev = if t == 0 { None } else { Some(times[t - 1]) };
        check_time(prev, time, t)?;
        let dt = prev.map_or(0.0, |p| time - p);
        let trans = cache.get(dt, |dt| model.transition(dt))?.clone();
        let predicted = predict(&state, &trans)?;
        let innov =
            Innovation::compute(&predicted, y, obs, observed_rows(y)).map_err(|e| e.at_time(t))?;
        let ll = innov.log_likelihood();
        let mut filtered = innov.apply(&predicted);
        filtered.last_accepted_time = Some(time);
        out.log_likelihood += ll;
        out.step_log_likelihoods.push(ll);
        out.transitions.push(trans);
        out.predicted.push(predicted);
        out.filtered.push(filtered.clone());
        state = filtered;
    }
    Ok(out)
}
