use nalgebra::DVector;

use super::latent::{latent_moments, predictive_log_likelihood, scalar_update, Projection};
use super::{assemble_joint, JointSsm, Mode, NoiseModel, SsgpfaModel};
use crate::error::{Error, Result};
use crate::explain::{Attribution, Projector};
use crate::kalman::{
    check_time, observed_rows, predict, GaussianState, RobustConfig, RobustFilter, SkipRule,
    TransitionCache,
};

/// One scored observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPoint {
    pub time: f64,
    /// Anomaly score `−log p(y_t | y_{1:t−1})` over the observed entries.
    pub score: f64,
    /// Per-dimension `−log p(y_{i,t} | y_{1:t−1})`; `NaN` for missing entries.
    pub marginal_scores: DVector<f64>,
    pub accepted: bool,
    /// Number of observed entries.
    pub observed: usize,
    /// Predictive mean of each latent value.
    pub latent_mean: DVector<f64>,
    /// Predictive variance of each latent value.
    pub latent_var: DVector<f64>,
    /// `None` when too few entries are observed to project onto the latents.
    pub attribution: Option<Attribution>,
}

/// Which filter implementation the scorer runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    /// Robust filter on the assembled joint state-space model.
    Joint,
    /// One scalar filter per latent on the projected observation, with the
    /// joint score reconstructed exactly from the per-latent predictives.
    PerLatent,
}

#[derive(Debug, Clone)]
struct Chain {
    state: GaussianState,
    cache: TransitionCache,
}

#[derive(Debug, Clone)]
enum EngineState {
    Joint(Box<RobustFilter<JointSsm>>),
    PerLatent {
        chains: Vec<Chain>,
        anchor: Option<f64>,
        last_time: Option<f64>,
    },
}

/// Streaming scorer holding the filter state of a single stream.
#[derive(Debug, Clone)]
pub struct OnlineScorer {
    model: SsgpfaModel,
    config: RobustConfig,
    projector: Projector,
    engine: EngineState,
    index: usize,
}

impl OnlineScorer {
    /// Per-latent engine for orthogonal models with more than one output,
    /// joint engine otherwise.
    pub fn new(model: &SsgpfaModel, config: RobustConfig) -> Result<Self> {
        let engine = if model.mode() == Mode::Orthogonal && model.dims() > 1 {
            Engine::PerLatent
        } else {
            Engine::Joint
        };
        Self::with_engine(model, config, engine)
    }

    pub fn with_engine(model: &SsgpfaModel, config: RobustConfig, engine: Engine) -> Result<Self> {
        let state = match engine {
            Engine::Joint => EngineState::Joint(Box::new(RobustFilter::new(assemble_joint(model)?, config))),
            Engine::PerLatent => {
                if model.mode() != Mode::Orthogonal {
                    return Err(Error::UnsupportedCombination(
                        "per-latent scoring needs an orthogonal model".into(),
                    ));
                }
                EngineState::PerLatent {
                    chains: model
                        .kernels()
                        .iter()
                        .map(|k| Chain {
                            state: GaussianState::new(DVector::zeros(k.state_dim()), k.initial_cov().clone()),
                            cache: TransitionCache::default(),
                        })
                        .collect(),
                    anchor: None,
                    last_time: None,
                }
            }
        };
        Ok(Self {
            projector: Projector::new(model)?,
            model: model.clone(),
            config,
            engine: state,
            index: 0,
        })
    }

    pub fn model(&self) -> &SsgpfaModel {
        &self.model
    }

    pub fn engine(&self) -> Engine {
        match self.engine {
            EngineState::Joint(_) => Engine::Joint,
            EngineState::PerLatent { .. } => Engine::PerLatent,
        }
    }

    pub fn step(&mut self, time: f64, y: &DVector<f64>) -> Result<ScoredPoint> {
        if y.len() != self.model.dims() {
            return Err(Error::Shape(format!(
                "observation has {} dimensions, model expects {}",
                y.len(),
                self.model.dims()
            )));
        }
        let index = self.index;
        let (log_likelihood, marginals, accepted, observed, latent_mean, latent_var) = match &mut self.engine {
            EngineState::Joint(filter) => {
                let r = filter.step(time, y)?;
                let joint = filter.model();
                let (mean, cov) = joint.latent_moments(&r.predicted);
                let var = cov.diagonal();
                (r.log_likelihood, r.marginal_log_likelihoods, r.accepted, r.observed, mean, var)
            }
            EngineState::PerLatent {
                chains,
                anchor,
                last_time,
            } => {
                check_time(*last_time, time, index)?;
                let sigma2 = match self.model.noise() {
                    NoiseModel::Isotropic(v) => *v,
                    NoiseModel::Diagonal(_) => unreachable!("orthogonal models have isotropic noise"),
                };
                let from = *anchor.get_or_insert(time);
                let kk = chains.len();
                let mut preds = Vec::with_capacity(kk);
                let mut m = DVector::zeros(kk);
                let mut s = DVector::zeros(kk);
                for (k, (chain, kernel)) in chains.iter_mut().zip(self.model.kernels()).enumerate() {
                    let trans = chain.cache.get(time - from, |dt| kernel.discretize(dt))?;
                    let pred = predict(&chain.state, trans)?;
                    (m[k], s[k]) = latent_moments(&pred, kernel.emission());
                    preds.push(pred);
                }
                let c = self.model.loading();
                let d = self.model.offset();
                let rows = observed_rows(y);
                let n_obs = rows.len();
                let proj = Projection::compute(c, d, y, rows);
                let (ll, marginals) = predictive_log_likelihood(c, d, sigma2, &m, &s, y, &proj)
                    .map_err(|e| e.at_time(index))?;
                let use_rows: Vec<usize> = if !self.config.robust {
                    proj.observed.clone()
                } else {
                    match self.config.rule {
                        SkipRule::Joint if ll > self.config.log_rho => proj.observed.clone(),
                        SkipRule::Joint => Vec::new(),
                        SkipRule::PerDimension => proj
                            .observed
                            .iter()
                            .copied()
                            .filter(|&i| marginals[i] > self.config.log_rho)
                            .collect(),
                    }
                };
                let accepted = !use_rows.is_empty();
                if accepted {
                    let proj = if use_rows.len() == n_obs {
                        proj
                    } else {
                        Projection::compute(c, d, y, use_rows)
                    };
                    for (k, (chain, pred)) in chains.iter_mut().zip(preds).enumerate() {
                        let h = self.model.kernels()[k].emission();
                        let u = proj.u[k];
                        let mut next = if u.is_nan() {
                            pred
                        } else {
                            scalar_update(&pred, h, u, sigma2 * proj.noise_scale[k])
                        };
                        next.last_accepted_time = Some(time);
                        chain.state = next;
                    }
                    *anchor = Some(time);
                }
                *last_time = Some(time);
                (ll, marginals, accepted, n_obs, m, s)
            }
        };
        self.index += 1;
        let attribution = self.projector.attribute(y, &latent_mean, &latent_var);
        Ok(ScoredPoint {
            time,
            score: -log_likelihood,
            marginal_scores: -marginals,
            accepted,
            observed,
            latent_mean,
            latent_var,
            attribution,
        })
    }
}

/// Score a whole series with a fresh [`OnlineScorer`].
pub fn score_online(
    model: &SsgpfaModel,
    times: &[f64],
    ys: &[DVector<f64>],
    config: RobustConfig,
) -> Result<Vec<ScoredPoint>> {
    if times.len() != ys.len() {
        return Err(Error::Shape(format!(
            "{} timestamps for {} observations",
            times.len(),
            ys.len()
        )));
    }
    let mut scorer = OnlineScorer::new(model, config)?;
    times.iter().zip(ys).map(|(&t, y)| scorer.step(t, y)).collect()
}
