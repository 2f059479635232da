//! Kalman prediction/update, predictive log-likelihoods, RTS smoothing and the
//! robust streaming filter that skips updates on improbable observations.
//!
//! Observations are `DVector<f64>` values where `NaN` marks a missing entry;
//! updates are restricted to the observed rows.

mod filter;
mod smoother;

pub use filter::{
    filter_batch, robust_filter, BatchFilterOutput, FilterStepResult, GpStateSpace, RobustConfig,
    RobustFilter, SkipRule, StateSpaceModel, TransitionCache, DEFAULT_RHO,
};
pub use smoother::rts_smooth;
pub(crate) use filter::check_time;

use nalgebra::{DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::kernels::DiscretizedTransition;
use crate::linalg::{checked_cholesky, symmetrize, LN_2PI};

/// Gaussian belief over the state at the time of the last incorporated observation.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// Time of the most recent observation folded into this state; `None`
    /// before the first step of a stream.
    pub last_accepted_time: Option<f64>,
}

impl GaussianState {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        Self {
            mean,
            cov,
            last_accepted_time: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// `y = H x + offset + ε`, `ε ~ N(0, diag(r))`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearObservationModel {
    pub h: DMatrix<f64>,
    pub r: DVector<f64>,
    pub offset: DVector<f64>,
}

impl LinearObservationModel {
    pub fn new(h: DMatrix<f64>, r: DVector<f64>, offset: DVector<f64>) -> Result<Self> {
        if r.len() != h.nrows() || offset.len() != h.nrows() {
            return Err(Error::Shape(format!(
                "observation model: H is {}x{}, R has {} entries, offset has {}",
                h.nrows(),
                h.ncols(),
                r.len(),
                offset.len()
            )));
        }
        if let Some(bad) = r.iter().find(|v| !(**v > 0.0)) {
            return Err(Error::ParameterDomain {
                name: "observation noise",
                requirement: "positive",
                value: *bad,
            });
        }
        Ok(Self { h, r, offset })
    }

    pub fn obs_dim(&self) -> usize {
        self.h.nrows()
    }

    /// Predictive mean `H m + offset` and per-dimension variance `diag(H P Hᵀ) + r`.
    pub fn predictive(&self, state: &GaussianState) -> (DVector<f64>, DVector<f64>) {
        let mean = &self.h * &state.mean + &self.offset;
        let hp = &self.h * &state.cov;
        let var = DVector::from_fn(self.obs_dim(), |i, _| {
            hp.row(i).dot(&self.h.row(i)) + self.r[i]
        });
        (mean, var)
    }
}

/// `m' = A m`, `P' = A P Aᵀ + Q`.
pub fn predict(state: &GaussianState, trans: &DiscretizedTransition) -> Result<GaussianState> {
    if trans.a.nrows() != state.dim() || trans.a.ncols() != state.dim() {
        return Err(Error::Shape(format!(
            "transition is {}x{} but state has dimension {}",
            trans.a.nrows(),
            trans.a.ncols(),
            state.dim()
        )));
    }
    Ok(GaussianState {
        mean: &trans.a * &state.mean,
        cov: symmetrize(&(&trans.a * &state.cov * trans.a.transpose() + &trans.q)),
        last_accepted_time: state.last_accepted_time,
    })
}

/// Innovation of an observation against a predicted state, restricted to a
/// subset of observed rows, with its factorized covariance.
pub(crate) struct Innovation {
    pub observed: Vec<usize>,
    pub v: DVector<f64>,
    pub s: DMatrix<f64>,
    h_obs: DMatrix<f64>,
    r_obs: DVector<f64>,
    chol: Option<nalgebra::Cholesky<f64, Dyn>>,
}

impl Innovation {
    pub fn compute(
        state: &GaussianState,
        y: &DVector<f64>,
        obs: &LinearObservationModel,
        observed: Vec<usize>,
    ) -> Result<Self> {
        let n = state.dim();
        let h_obs = DMatrix::from_fn(observed.len(), n, |i, j| obs.h[(observed[i], j)]);
        let r_obs = DVector::from_fn(observed.len(), |i, _| obs.r[observed[i]]);
        let pred = &h_obs * &state.mean;
        let v = DVector::from_fn(observed.len(), |i, _| {
            y[observed[i]] - pred[i] - obs.offset[observed[i]]
        });
        let mut s = symmetrize(&(&h_obs * &state.cov * h_obs.transpose()));
        for i in 0..observed.len() {
            s[(i, i)] += r_obs[i];
        }
        let chol = if observed.is_empty() {
            None
        } else {
            Some(checked_cholesky(&s)?)
        };
        Ok(Self {
            observed,
            v,
            s,
            h_obs,
            r_obs,
            chol,
        })
    }

    pub fn log_likelihood(&self) -> f64 {
        let Some(chol) = &self.chol else { return 0.0 };
        let l = chol.l_dirty();
        let logdet: f64 = (0..self.v.len()).map(|i| l[(i, i)].ln()).sum();
        let white = chol
            .l()
            .solve_lower_triangular(&self.v)
            .expect("cholesky factor has a positive diagonal");
        -0.5 * (self.v.len() as f64 * LN_2PI + 2.0 * logdet + white.norm_squared())
    }

    /// Joseph-form update of `state` with this innovation.
    pub fn apply(&self, state: &GaussianState) -> GaussianState {
        let Some(chol) = &self.chol else {
            return state.clone();
        };
        let n = state.dim();
        let hp = &self.h_obs * &state.cov;
        let gain = chol.solve(&hp).transpose();
        let mean = &state.mean + &gain * &self.v;
        let i_kh = DMatrix::<f64>::identity(n, n) - &gain * &self.h_obs;
        let mut krk = gain.clone();
        for (j, r) in self.r_obs.iter().enumerate() {
            krk.column_mut(j).scale_mut(*r);
        }
        let cov = &i_kh * &state.cov * i_kh.transpose() + krk * gain.transpose();
        GaussianState {
            mean,
            cov: symmetrize(&cov),
            last_accepted_time: state.last_accepted_time,
        }
    }
}

pub(crate) fn observed_rows(y: &DVector<f64>) -> Vec<usize> {
    (0..y.len()).filter(|&i| !y[i].is_nan()).collect()
}

/// Result of a measurement update on the observed rows of `y`.
#[derive(Debug, Clone)]
pub struct UpdateOutcome {
    pub state: GaussianState,
    /// Indices of the rows that were observed.
    pub observed: Vec<usize>,
    pub innovation: DVector<f64>,
    pub innovation_cov: DMatrix<f64>,
}

/// Kalman update restricted to the non-missing entries of `y`; the state is
/// unchanged when every entry is missing.
pub fn update(
    state: &GaussianState,
    y: &DVector<f64>,
    obs: &LinearObservationModel,
) -> Result<UpdateOutcome> {
    if y.len() != obs.obs_dim() || obs.h.ncols() != state.dim() {
        return Err(Error::Shape(format!(
            "observation of length {} against {}x{} emission and state dimension {}",
            y.len(),
            obs.h.nrows(),
            obs.h.ncols(),
            state.dim()
        )));
    }
    let innov = Innovation::compute(state, y, obs, observed_rows(y))?;
    Ok(UpdateOutcome {
        state: innov.apply(state),
        observed: innov.observed.clone(),
        innovation: innov.v.clone(),
        innovation_cov: innov.s.clone(),
    })
}

/// Joint log-density `log N(v; 0, S)` and per-dimension marginals `log N(vᵢ; 0, Sᵢᵢ)`.
pub fn observation_log_likelihood(
    v: &DVector<f64>,
    s: &DMatrix<f64>,
) -> Result<(f64, DVector<f64>)> {
    if s.nrows() != v.len() || s.ncols() != v.len() {
        return Err(Error::Shape(format!(
            "innovation of length {} with {}x{} covariance",
            v.len(),
            s.nrows(),
            s.ncols()
        )));
    }
    let joint = crate::linalg::gaussian_log_density(v, s)?;
    let marginals = DVector::from_fn(v.len(), |i, _| {
        crate::linalg::scalar_log_density(v[i], s[(i, i)])
    });
    Ok((joint, marginals))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_state(m: f64, p: f64) -> GaussianState {
        GaussianState::new(DVector::from_element(1, m), DMatrix::from_element(1, 1, p))
    }

    fn scalar_obs(r: f64) -> LinearObservationModel {
        LinearObservationModel::new(
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, r),
            DVector::zeros(1),
        )
        .unwrap()
    }

    #[test]
    fn scalar_predict() {
        let tr = DiscretizedTransition {
            a: DMatrix::from_element(1, 1, 0.5),
            q: DMatrix::from_element(1, 1, 0.75),
            dt: 1.0,
        };
        let p = predict(&scalar_state(1.0, 1.0), &tr).unwrap();
        assert_eq!(p.mean[0], 0.5);
        assert_eq!(p.cov[(0, 0)], 1.0);
        let s = scalar_state(0.3, 2.0);
        assert_eq!(predict(&s, &DiscretizedTransition::identity(1)).unwrap(), s);
    }

    #[test]
    fn predict_shape_mismatch() {
        let s = scalar_state(0.0, 1.0);
        assert!(matches!(
            predict(&s, &DiscretizedTransition::identity(2)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn scalar_update() {
        let out = update(
            &scalar_state(0.0, 1.0),
            &DVector::from_element(1, 1.0),
            &scalar_obs(1.0),
        )
        .unwrap();
        assert_eq!(out.innovation[0], 1.0);
        assert_eq!(out.innovation_cov[(0, 0)], 2.0);
        assert!((out.state.mean[0] - 0.5).abs() < 1e-15);
        assert!((out.state.cov[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn missing_observation_leaves_state() {
        let s = scalar_state(0.2, 1.3);
        let out = update(&s, &DVector::from_element(1, f64::NAN), &scalar_obs(1.0)).unwrap();
        assert_eq!(out.state, s);
        assert!(out.observed.is_empty());
    }

    #[test]
    fn uninformative_observation() {
        let s = scalar_state(0.2, 1.3);
        let out = update(&s, &DVector::from_element(1, 50.0), &scalar_obs(1e12)).unwrap();
        assert!((out.state.mean[0] - 0.2).abs() < 1e-6);
    }

    #[test]
    fn partially_missing_uses_observed_rows() {
        let s = GaussianState::new(DVector::zeros(1), DMatrix::from_element(1, 1, 1.0));
        let obs = LinearObservationModel::new(
            DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
            DVector::from_vec(vec![1.0, 1.0]),
            DVector::zeros(2),
        )
        .unwrap();
        let y = DVector::from_vec(vec![f64::NAN, 1.0]);
        let out = update(&s, &y, &obs).unwrap();
        assert_eq!(out.observed, vec![1]);
        assert!((out.state.mean[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn log_likelihood_values() {
        let (joint, marg) = observation_log_likelihood(
            &DVector::from_element(1, 1.0),
            &DMatrix::from_element(1, 1, 2.0),
        )
        .unwrap();
        let want = -0.5 * ((4.0 * std::f64::consts::PI).ln() + 0.5);
        assert!((joint - want).abs() < 1e-14);
        assert!((joint - (-1.515512)).abs() < 1e-6);
        assert!((marg[0] - want).abs() < 1e-14);

        let (joint, _) = observation_log_likelihood(
            &DVector::from_element(1, 0.0),
            &DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        assert!((joint + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-14);

        let v = DVector::from_vec(vec![0.3, -1.2, 2.0]);
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 2.0, 3.5]));
        let (joint, marg) = observation_log_likelihood(&v, &s).unwrap();
        assert!((joint - marg.sum()).abs() < 1e-12);
    }

    #[test]
    fn non_pd_covariance_is_degenerate() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            observation_log_likelihood(&DVector::zeros(2), &s),
            Err(Error::Degenerate { .. })
        ));
    }

    #[test]
    fn nonpositive_noise_rejected() {
        assert!(LinearObservationModel::new(
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, 0.0),
            DVector::zeros(1),
        )
        .is_err());
    }
}
