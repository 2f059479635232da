//! Deterministic workloads shared by the benchmarks.

use nalgebra::DVector;
use ssgpfa::data::synth::{gen_multivariate, MultivariateSpec, SyntheticSpec};
use ssgpfa::kernels::KernelExpr;
use ssgpfa::ssgpfa::{Mode, NoiseModel, SsgpfaModel};

pub struct Workload {
    pub times: Vec<f64>,
    pub values: Vec<DVector<f64>>,
    /// The generating model.
    pub model: SsgpfaModel,
}

/// `dims`-dimensional series of `length` steps driven by `latents` Matérn processes.
pub fn workload(dims: usize, latents: usize, length: usize, mode: Mode) -> Workload {
    let kernels: Vec<KernelExpr> = (0..latents)
        .map(|k| KernelExpr::matern32(10.0 * (k + 1) as f64, 1.0))
        .collect();
    let mv = MultivariateSpec {
        dims,
        latents: kernels.clone(),
        noise_variance: 0.1,
        offset_scale: 1.0,
        mixing_seed: 42,
    };
    let spec = SyntheticSpec {
        length,
        seed: 43,
        injections: Vec::new(),
    };
    let synth = gen_multivariate(&spec, &mv).expect("valid workload");
    let noise = match mode {
        Mode::Orthogonal => NoiseModel::Isotropic(0.1),
        Mode::Unconstrained => NoiseModel::Diagonal(vec![0.1; dims]),
    };
    let model = SsgpfaModel::new(kernels, synth.loading, synth.offset, noise, mode).expect("valid model");
    Workload {
        times: synth.series.times,
        values: synth.series.values,
        model,
    }
}
