use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Mode, NoiseModel, SsgpfaModel, Standardization};
use crate::error::{Error, Result};
use crate::kernels::KernelExpr;

pub const MODEL_FORMAT: &str = "ssgpfa-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    mode: Mode,
    latents: Vec<KernelExpr>,
    /// Row-major `D × K`.
    loading: Vec<Vec<f64>>,
    offset: Vec<f64>,
    noise: NoiseModel,
    #[serde(default)]
    standardization: Option<Standardization>,
    #[serde(default)]
    training_log: Vec<f64>,
}

impl SsgpfaModel {
    pub fn to_json(&self) -> Result<String> {
        let c = self.loading();
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            mode: self.mode(),
            latents: self.latents().to_vec(),
            loading: c.row_iter().map(|r| r.iter().copied().collect()).collect(),
            offset: self.offset().iter().copied().collect(),
            noise: self.noise().clone(),
            standardization: self.standardization.clone(),
            training_log: self.training_log.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(s)?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(Error::Config(format!(
                "unsupported model file `{}` version {}",
                file.format, file.version
            )));
        }
        let d = file.loading.len();
        let k = file.loading.first().map_or(0, Vec::len);
        if file.loading.iter().any(|r| r.len() != k) {
            return Err(Error::Shape("loading rows have different lengths".into()));
        }
        let loading = DMatrix::from_fn(d, k, |i, j| file.loading[i][j]);
        if let Some(s) = &file.standardization {
            if s.mean.len() != d || s.std.len() != d {
                return Err(Error::Shape("standardization does not match the model dimension".into()));
            }
        }
        let mut model = SsgpfaModel::new(
            file.latents,
            loading,
            DVector::from_vec(file.offset),
            file.noise,
            file.mode,
        )?;
        model.standardization = file.standardization;
        model.training_log = file.training_log;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_is_exact() {
        let c = DMatrix::from_row_slice(3, 1, &[0.1f64.sqrt(), 0.3f64.sqrt(), 0.6f64.sqrt()]);
        let c = &c / c.norm();
        let mut m = SsgpfaModel::new(
            vec!["matern32(lengthscale=1.7, variance=0.3) * cosine(period=24, variance=1) + brownian(diffusion=0.01)"
                .parse()
                .unwrap()],
            c,
            DVector::from_vec(vec![0.1, 1.0 / 3.0, -2.5]),
            NoiseModel::Isotropic(0.123456789),
            Mode::Orthogonal,
        )
        .unwrap();
        m.standardization = Some(Standardization {
            mean: vec![1.0, 2.0, 3.0],
            std: vec![0.5, 1.0 / 7.0, 2.0],
        });
        m.training_log = vec![-10.5, -9.25];
        let back = SsgpfaModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back.loading(), m.loading());
        assert_eq!(back.offset(), m.offset());
        assert_eq!(back.noise(), m.noise());
        assert_eq!(back.latents(), m.latents());
        assert_eq!(back.standardization, m.standardization);
        assert_eq!(back.training_log, m.training_log);
    }

    #[test]
    fn rejects_unknown_version() {
        let s = r#"{"format":"ssgpfa-model","version":9,"mode":"orthogonal","latents":["matern32(lengthscale=1)"],
            "loading":[[1.0]],"offset":[0.0],"noise":{"isotropic":1.0}}"#;
        assert!(matches!(SsgpfaModel::from_json(s), Err(Error::Config(_))));
        let ok = s.replace("\"version\":9", "\"version\":1");
        assert!(SsgpfaModel::from_json(&ok).is_ok());
    }
}
