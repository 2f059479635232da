//! State-space (SDE) representations of temporal GP covariance functions.
//!
//! A kernel is described by its feedback matrix `F`, emission vector `h` and,
//! for stationary kernels, the stationary state covariance `P∞`. Nonstationary
//! kernels instead carry a diffusion matrix `G` from which the process noise of
//! a step of length `Δ` is integrated as `Q(Δ) = ∫₀^Δ e^{Fs} G e^{Fᵀs} ds`.
//!
//! Sums stack the state spaces block-diagonally, products use the Kronecker
//! sum of the feedback matrices and Kronecker products of the rest.

mod expr;

pub use expr::{parse_latent_list, KernelExpr};

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{require_positive, Error, Result};
use crate::linalg::{block_diag, expm, kron_sum, symmetrize};

/// SDE representation of a GP covariance function.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceKernel {
    feedback: DMatrix<f64>,
    emission: DVector<f64>,
    stationary_cov: Option<DMatrix<f64>>,
    diffusion: DMatrix<f64>,
    initial_cov: DMatrix<f64>,
    expr: KernelExpr,
}

/// Transition and process noise for one step of elapsed time `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedTransition {
    pub a: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub dt: f64,
}

impl DiscretizedTransition {
    pub fn identity(n: usize) -> Self {
        Self {
            a: DMatrix::identity(n, n),
            q: DMatrix::zeros(n, n),
            dt: 0.0,
        }
    }

    /// Block-diagonal stacking of independent transitions sharing the same `dt`.
    pub fn stack(parts: &[DiscretizedTransition]) -> Self {
        let a: Vec<_> = parts.iter().map(|p| &p.a).collect();
        let q: Vec<_> = parts.iter().map(|p| &p.q).collect();
        Self {
            a: block_diag(&a),
            q: block_diag(&q),
            dt: parts.first().map_or(0.0, |p| p.dt),
        }
    }
}

impl StateSpaceKernel {
    /// Matérn-3/2 kernel `σ²(1 + λτ)e^{-λτ}` with `λ = √3 / lengthscale`.
    pub fn matern32(lengthscale: f64, variance: f64) -> Result<Self> {
        require_positive("lengthscale", lengthscale)?;
        require_positive("variance", variance)?;
        let lambda = 3f64.sqrt() / lengthscale;
        let feedback =
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -lambda * lambda, -2.0 * lambda]);
        let p_inf = DMatrix::from_row_slice(
            2,
            2,
            &[variance, 0.0, 0.0, lambda * lambda * variance],
        );
        Ok(Self::stationary(
            feedback,
            DVector::from_vec(vec![1.0, 0.0]),
            p_inf,
            KernelExpr::Matern32 {
                lengthscale,
                variance,
            },
        ))
    }

    /// Cosine kernel `σ² cos(2πτ / period)`: an undamped oscillator with a random
    /// initial state.
    pub fn cosine(period: f64, variance: f64) -> Result<Self> {
        require_positive("period", period)?;
        require_positive("variance", variance)?;
        let omega = 2.0 * PI / period;
        let feedback = DMatrix::from_row_slice(2, 2, &[0.0, -omega, omega, 0.0]);
        let p_inf = DMatrix::from_diagonal_element(2, 2, variance);
        Ok(Self::stationary(
            feedback,
            DVector::from_vec(vec![1.0, 0.0]),
            p_inf,
            KernelExpr::Cosine { period, variance },
        ))
    }

    /// Brownian motion with diffusion `q`, started from a known (zero-variance)
    /// state at the beginning of the stream.
    pub fn brownian(diffusion: f64) -> Result<Self> {
        require_positive("diffusion", diffusion)?;
        Ok(Self {
            feedback: DMatrix::zeros(1, 1),
            emission: DVector::from_element(1, 1.0),
            stationary_cov: None,
            diffusion: DMatrix::from_element(1, 1, diffusion),
            initial_cov: DMatrix::zeros(1, 1),
            expr: KernelExpr::Brownian { diffusion },
        })
    }

    fn stationary(
        feedback: DMatrix<f64>,
        emission: DVector<f64>,
        p_inf: DMatrix<f64>,
        expr: KernelExpr,
    ) -> Self {
        // Lyapunov equation F P∞ + P∞ Fᵀ + G = 0 gives the equivalent diffusion.
        let diffusion = symmetrize(&-(&feedback * &p_inf + &p_inf * feedback.transpose()));
        Self {
            feedback,
            emission,
            initial_cov: p_inf.clone(),
            stationary_cov: Some(p_inf),
            diffusion,
            expr,
        }
    }

    /// Kernel sum `k1 + k2`.
    pub fn add(k1: &Self, k2: &Self) -> Self {
        let stationary_cov = match (&k1.stationary_cov, &k2.stationary_cov) {
            (Some(a), Some(b)) => Some(block_diag(&[a, b])),
            _ => None,
        };
        let mut emission = DVector::zeros(k1.state_dim() + k2.state_dim());
        emission.rows_mut(0, k1.state_dim()).copy_from(&k1.emission);
        emission
            .rows_mut(k1.state_dim(), k2.state_dim())
            .copy_from(&k2.emission);
        Self {
            feedback: block_diag(&[&k1.feedback, &k2.feedback]),
            emission,
            stationary_cov,
            diffusion: block_diag(&[&k1.diffusion, &k2.diffusion]),
            initial_cov: block_diag(&[&k1.initial_cov, &k2.initial_cov]),
            expr: KernelExpr::Sum(Box::new(k1.expr.clone()), Box::new(k2.expr.clone())),
        }
    }

    /// Kernel product `k1 · k2`; both factors must be stationary.
    pub fn multiply(k1: &Self, k2: &Self) -> Result<Self> {
        let (p1, p2) = match (&k1.stationary_cov, &k2.stationary_cov) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(Error::UnsupportedCombination(format!(
                    "product of nonstationary kernel in `({}) * ({})`",
                    k1.expr, k2.expr
                )))
            }
        };
        Ok(Self::stationary(
            kron_sum(&k1.feedback, &k2.feedback),
            k1.emission.kronecker(&k2.emission),
            p1.kronecker(p2),
            KernelExpr::Product(Box::new(k1.expr.clone()), Box::new(k2.expr.clone())),
        ))
    }

    pub fn state_dim(&self) -> usize {
        self.feedback.nrows()
    }

    pub fn feedback(&self) -> &DMatrix<f64> {
        &self.feedback
    }

    pub fn emission(&self) -> &DVector<f64> {
        &self.emission
    }

    pub fn stationary_cov(&self) -> Option<&DMatrix<f64>> {
        self.stationary_cov.as_ref()
    }

    pub fn is_stationary(&self) -> bool {
        self.stationary_cov.is_some()
    }

    pub fn diffusion(&self) -> &DMatrix<f64> {
        &self.diffusion
    }

    /// State covariance at the start of a stream: `P∞` for stationary kernels,
    /// zero for the Brownian parts.
    pub fn initial_cov(&self) -> &DMatrix<f64> {
        &self.initial_cov
    }

    pub fn expr(&self) -> &KernelExpr {
        &self.expr
    }

    /// Prior variance of the process value at stream start (`hᵀ P₀ h`).
    pub fn prior_variance(&self) -> f64 {
        (self.emission.transpose() * &self.initial_cov * &self.emission)[(0, 0)]
    }

    /// Transition `A = exp(FΔ)` and process noise `Q(Δ)` for elapsed time `dt`.
    pub fn discretize(&self, dt: f64) -> Result<DiscretizedTransition> {
        if !(dt >= 0.0) || !dt.is_finite() {
            return Err(Error::Input(format!(
                "elapsed time must be finite and nonnegative, got {dt}"
            )));
        }
        let n = self.state_dim();
        if dt == 0.0 {
            return Ok(DiscretizedTransition::identity(n));
        }
        match &self.stationary_cov {
            Some(p_inf) => {
                let a = expm(&(&self.feedback * dt))?;
                let q = symmetrize(&(p_inf - &a * p_inf * a.transpose()));
                Ok(DiscretizedTransition { a, q, dt })
            }
            None => {
                // Van Loan: exp([[F, G], [0, -Fᵀ]] Δ) = [[A, B], [0, A⁻ᵀ]], Q = B Aᵀ.
                let mut block = DMatrix::zeros(2 * n, 2 * n);
                block.view_mut((0, 0), (n, n)).copy_from(&self.feedback);
                block.view_mut((0, n), (n, n)).copy_from(&self.diffusion);
                block
                    .view_mut((n, n), (n, n))
                    .copy_from(&-self.feedback.transpose());
                let e = expm(&(block * dt))?;
                let a = e.view((0, 0), (n, n)).into_owned();
                let b = e.view((0, n), (n, n)).into_owned();
                let q = symmetrize(&(b * a.transpose()));
                Ok(DiscretizedTransition { a, q, dt })
            }
        }
    }

    /// Covariance `k(τ) = hᵀ exp(Fτ) P∞ h` implied by the state-space form.
    pub fn prior_covariance(&self, tau: f64) -> Result<f64> {
        let p_inf = self.stationary_cov.as_ref().ok_or_else(|| {
            Error::UnsupportedCombination(format!(
                "prior covariance of nonstationary kernel `{}`",
                self.expr
            ))
        })?;
        if !(tau >= 0.0) {
            return Err(Error::Input(format!("lag must be nonnegative, got {tau}")));
        }
        let a = expm(&(&self.feedback * tau))?;
        Ok((self.emission.transpose() * a * p_inf * &self.emission)[(0, 0)])
    }
}
