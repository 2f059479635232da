use nalgebra::{DMatrix, DVector};

use super::SsgpfaModel;
use crate::error::Result;
use crate::kalman::{GaussianState, LinearObservationModel, StateSpaceModel};
use crate::kernels::{DiscretizedTransition, StateSpaceKernel};
use crate::linalg::block_diag;

/// The whole factor model as one linear-Gaussian state-space model with a
/// block-diagonal transition and emission `[C₁h₁ᵀ, …, C_Kh_Kᵀ]`.
#[derive(Debug, Clone)]
pub struct JointSsm {
    kernels: Vec<StateSpaceKernel>,
    offsets: Vec<usize>,
    obs: LinearObservationModel,
    initial_cov: DMatrix<f64>,
}

/// Assemble the joint state-space form of `model`.
pub fn assemble_joint(model: &SsgpfaModel) -> Result<JointSsm> {
    let kernels = model.kernels().to_vec();
    let mut offsets = Vec::with_capacity(kernels.len());
    let mut n = 0;
    for k in &kernels {
        offsets.push(n);
        n += k.state_dim();
    }
    let c = model.loading();
    let mut h = DMatrix::zeros(model.dims(), n);
    for (k, kernel) in kernels.iter().enumerate() {
        let block = c.column(k) * kernel.emission().transpose();
        h.view_mut((0, offsets[k]), (model.dims(), kernel.state_dim()))
            .copy_from(&block);
    }
    let obs = LinearObservationModel::new(h, model.noise_diagonal(), model.offset().clone())?;
    let covs: Vec<_> = kernels.iter().map(StateSpaceKernel::initial_cov).collect();
    let initial_cov = block_diag(&covs);
    Ok(JointSsm {
        kernels,
        offsets,
        obs,
        initial_cov,
    })
}

impl JointSsm {
    /// First state index of each latent's block.
    pub fn block_offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn kernels(&self) -> &[StateSpaceKernel] {
        &self.kernels
    }

    /// `K × n` matrix mapping the joint state to the latent values `z`.
    pub fn latent_selector(&self) -> DMatrix<f64> {
        let n = self.initial_cov.nrows();
        let mut s = DMatrix::zeros(self.kernels.len(), n);
        for (k, kernel) in self.kernels.iter().enumerate() {
            for (j, h) in kernel.emission().iter().enumerate() {
                s[(k, self.offsets[k] + j)] = *h;
            }
        }
        s
    }

    /// Mean and covariance of `z` under a joint Gaussian state.
    pub fn latent_moments(&self, state: &GaussianState) -> (DVector<f64>, DMatrix<f64>) {
        let s = self.latent_selector();
        let mean = &s * &state.mean;
        let cov = &s * &state.cov * s.transpose();
        (mean, cov)
    }

    /// Marginal of latent `k`'s block.
    pub fn block(&self, state: &GaussianState, k: usize) -> GaussianState {
        let (o, l) = (self.offsets[k], self.kernels[k].state_dim());
        GaussianState {
            mean: state.mean.rows(o, l).into_owned(),
            cov: state.cov.view((o, o), (l, l)).into_owned(),
            last_accepted_time: state.last_accepted_time,
        }
    }
}

impl StateSpaceModel for JointSsm {
    fn state_dim(&self) -> usize {
        self.initial_cov.nrows()
    }

    fn initial_state(&self) -> GaussianState {
        GaussianState::new(DVector::zeros(self.state_dim()), self.initial_cov.clone())
    }

    fn transition(&self, dt: f64) -> Result<DiscretizedTransition> {
        let parts = self
            .kernels
            .iter()
            .map(|k| k.discretize(dt))
            .collect::<Result<Vec<_>>>()?;
        Ok(DiscretizedTransition::stack(&parts))
    }

    fn observation(&self) -> &LinearObservationModel {
        &self.obs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelExpr;
    use crate::ssgpfa::{Mode, NoiseModel};

    #[test]
    fn block_structure() {
        let c = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let m = SsgpfaModel::new(
            vec![KernelExpr::matern32(1.0, 1.0), KernelExpr::matern32(2.0, 1.0)],
            c,
            DVector::zeros(3),
            NoiseModel::Diagonal(vec![0.1; 3]),
            Mode::Unconstrained,
        )
        .unwrap();
        let j = assemble_joint(&m).unwrap();
        assert_eq!(j.state_dim(), 4);
        let h = &j.observation().h;
        assert_eq!(h.shape(), (3, 4));
        assert_eq!(h.row(1).iter().copied().collect::<Vec<_>>(), vec![3.0, 0.0, 4.0, 0.0]);
        let tr = j.transition(0.7).unwrap();
        assert_eq!(tr.a[(0, 2)], 0.0);
        assert_eq!(tr.a[(3, 1)], 0.0);
        assert_eq!(j.block_offsets(), &[0, 2]);
    }
}
