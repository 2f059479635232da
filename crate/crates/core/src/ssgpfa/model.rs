use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{KernelExpr, StateSpaceKernel};

/// Tolerance on `‖CᵀC − I‖_F` for a loading matrix to count as orthogonal.
pub const ORTHOGONALITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Orthonormal loading columns and isotropic noise; latents are inferred independently.
    #[default]
    Orthogonal,
    /// Free loading matrix and diagonal noise; latents are inferred jointly.
    Unconstrained,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "orthogonal" => Ok(Mode::Orthogonal),
            "unconstrained" => Ok(Mode::Unconstrained),
            other => Err(Error::Config(format!(
                "unknown mode `{other}` (expected `orthogonal` or `unconstrained`)"
            ))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Orthogonal => "orthogonal",
            Mode::Unconstrained => "unconstrained",
        })
    }
}

/// Observation noise: `σ² I` or `diag(ψ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseModel {
    Isotropic(f64),
    Diagonal(Vec<f64>),
}

impl NoiseModel {
    pub fn diagonal(&self, dims: usize) -> DVector<f64> {
        match self {
            NoiseModel::Isotropic(v) => DVector::from_element(dims, *v),
            NoiseModel::Diagonal(v) => DVector::from_column_slice(v),
        }
    }
}

/// Per-dimension affine map applied to raw data before the model sees it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    pub fn apply(&self, y: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(y.len(), |i, _| (y[i] - self.mean[i]) / self.std[i])
    }
}

/// Gaussian process factor analysis model in state-space form.
///
/// `y_t = C z_t + d + ε_t` where each latent `z_k` is an independent GP with
/// a state-space kernel.
#[derive(Debug, Clone)]
pub struct SsgpfaModel {
    latents: Vec<KernelExpr>,
    kernels: Vec<StateSpaceKernel>,
    loading: DMatrix<f64>,
    offset: DVector<f64>,
    noise: NoiseModel,
    mode: Mode,
    pub standardization: Option<Standardization>,
    pub training_log: Vec<f64>,
}

impl SsgpfaModel {
    pub fn new(
        latents: Vec<KernelExpr>,
        loading: DMatrix<f64>,
        offset: DVector<f64>,
        noise: NoiseModel,
        mode: Mode,
    ) -> Result<Self> {
        let (d, k) = loading.shape();
        if latents.len() != k {
            return Err(Error::Shape(format!(
                "{} latent kernels for a loading matrix with {k} columns",
                latents.len()
            )));
        }
        if k == 0 {
            return Err(Error::Config("at least one latent is required".into()));
        }
        if k > d {
            return Err(Error::Config(format!(
                "number of latents ({k}) exceeds observed dimension ({d})"
            )));
        }
        if offset.len() != d {
            return Err(Error::Shape(format!(
                "offset has {} entries for {d} observed dimensions",
                offset.len()
            )));
        }
        if loading.iter().chain(offset.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite loading or offset".into()));
        }
        match (&noise, mode) {
            (NoiseModel::Isotropic(v), _) => check_noise(*v)?,
            (NoiseModel::Diagonal(_), Mode::Orthogonal) => {
                return Err(Error::Config(
                    "orthogonal mode requires isotropic noise".into(),
                ))
            }
            (NoiseModel::Diagonal(v), Mode::Unconstrained) => {
                if v.len() != d {
                    return Err(Error::Shape(format!(
                        "noise has {} entries for {d} observed dimensions",
                        v.len()
                    )));
                }
                for x in v {
                    check_noise(*x)?;
                }
            }
        }
        if mode == Mode::Orthogonal {
            let dev = orthogonality_defect(&loading);
            if !(dev < ORTHOGONALITY_TOL) {
                return Err(Error::Config(format!(
                    "orthogonal mode requires orthonormal loading columns (‖CᵀC − I‖_F = {dev:e})"
                )));
            }
        }
        let kernels = latents.iter().map(KernelExpr::build).collect::<Result<_>>()?;
        Ok(Self {
            latents,
            kernels,
            loading,
            offset,
            noise,
            mode,
            standardization: None,
            training_log: Vec::new(),
        })
    }

    pub fn dims(&self) -> usize {
        self.loading.nrows()
    }

    pub fn num_latents(&self) -> usize {
        self.loading.ncols()
    }

    pub fn latents(&self) -> &[KernelExpr] {
        &self.latents
    }

    pub fn kernels(&self) -> &[StateSpaceKernel] {
        &self.kernels
    }

    pub fn loading(&self) -> &DMatrix<f64> {
        &self.loading
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.offset
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn noise_diagonal(&self) -> DVector<f64> {
        self.noise.diagonal(self.dims())
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Joint state dimension `Σ L_k`.
    pub fn state_dim(&self) -> usize {
        self.kernels.iter().map(StateSpaceKernel::state_dim).sum()
    }

    /// Same structure with new loading, offset and noise.
    pub fn with_parameters(
        &self,
        loading: DMatrix<f64>,
        offset: DVector<f64>,
        noise: NoiseModel,
    ) -> Result<Self> {
        let mut m = Self::new(self.latents.clone(), loading, offset, noise, self.mode)?;
        m.standardization = self.standardization.clone();
        m.training_log = self.training_log.clone();
        Ok(m)
    }

    /// Same loading, offset and noise with new latent kernels.
    pub fn with_latents(&self, latents: Vec<KernelExpr>) -> Result<Self> {
        let mut m = Self::new(
            latents,
            self.loading.clone(),
            self.offset.clone(),
            self.noise.clone(),
            self.mode,
        )?;
        m.standardization = self.standardization.clone();
        m.training_log = self.training_log.clone();
        Ok(m)
    }
}

fn check_noise(v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::ParameterDomain {
            name: "noise variance",
            requirement: "positive and finite",
            value: v,
        })
    }
}

/// `‖CᵀC − I‖_F`.
pub fn orthogonality_defect(c: &DMatrix<f64>) -> f64 {
    let k = c.ncols();
    (c.transpose() * c - DMatrix::<f64>::identity(k, k)).norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn latents(k: usize) -> Vec<KernelExpr> {
        (0..k).map(|_| KernelExpr::matern32(1.0, 1.0)).collect()
    }

    #[test]
    fn validates_shapes_and_constraints() {
        let c = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let d = DVector::zeros(3);
        assert!(SsgpfaModel::new(latents(2), c.clone(), d.clone(), NoiseModel::Isotropic(0.1), Mode::Orthogonal).is_ok());
        assert!(matches!(
            SsgpfaModel::new(latents(2), &c * 2.0, d.clone(), NoiseModel::Isotropic(0.1), Mode::Orthogonal),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            SsgpfaModel::new(latents(2), c.clone(), d.clone(), NoiseModel::Isotropic(0.0), Mode::Orthogonal),
            Err(Error::ParameterDomain { .. })
        ));
        assert!(matches!(
            SsgpfaModel::new(latents(1), c.clone(), d.clone(), NoiseModel::Isotropic(0.1), Mode::Orthogonal),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            SsgpfaModel::new(latents(3), DMatrix::zeros(2, 3), DVector::zeros(2), NoiseModel::Diagonal(vec![1.0; 2]), Mode::Unconstrained),
            Err(Error::Config(_))
        ));
        let m = SsgpfaModel::new(
            latents(2),
            &c * 2.0,
            d,
            NoiseModel::Diagonal(vec![0.1, 0.2, 0.3]),
            Mode::Unconstrained,
        )
        .unwrap();
        assert_eq!(m.state_dim(), 4);
        assert_eq!(m.noise_diagonal()[2], 0.3);
    }

    #[test]
    fn mode_parses() {
        assert_eq!("Orthogonal".parse::<Mode>().unwrap(), Mode::Orthogonal);
        assert_eq!("unconstrained".parse::<Mode>().unwrap(), Mode::Unconstrained);
        assert!("joint".parse::<Mode>().is_err());
    }
}
