//! Deterministic synthetic series with labeled anomaly injections.
//!
//! All randomness comes from `ChaCha8Rng` seeded with a `u64`, which yields
//! the same stream on every platform.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::LabeledSeries;
use crate::error::{Error, Result};
use crate::kernels::KernelExpr;
use crate::linalg::psd_factor;

/// Noise parameter of the univariate generator.
pub const DEFAULT_UNIVARIATE_NOISE: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseLevel {
    None,
    Variance(f64),
    StdDev(f64),
}

impl NoiseLevel {
    pub fn std_dev(self) -> f64 {
        match self {
            NoiseLevel::None => 0.0,
            NoiseLevel::Variance(v) => v.sqrt(),
            NoiseLevel::StdDev(s) => s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InjectionKind {
    /// Add `magnitude` inside the window.
    Spike,
    /// Multiply by `magnitude` inside the window.
    AmplitudeScale,
    /// Multiply by `magnitude ∈ [0, 1)` inside the window.
    Damping,
    /// Add `magnitude` to the selected observed dimensions inside the window.
    SensorOffset,
    /// Add `magnitude` from the window start to the end of the series; only the
    /// window itself is labeled.
    ChangePoint,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Latent(usize),
    Dims(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    pub kind: InjectionKind,
    pub start: usize,
    pub duration: usize,
    pub magnitude: f64,
    pub target: Target,
}

impl Injection {
    pub fn window(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.duration
    }

    fn affected(&self, len: usize) -> std::ops::Range<usize> {
        match self.kind {
            InjectionKind::ChangePoint => self.start..len,
            _ => self.window(),
        }
    }

    fn apply(&self, x: &mut [f64]) {
        let range = self.affected(x.len());
        for v in &mut x[range] {
            match self.kind {
                InjectionKind::AmplitudeScale | InjectionKind::Damping => *v *= self.magnitude,
                _ => *v += self.magnitude,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub length: usize,
    pub seed: u64,
    #[serde(default)]
    pub injections: Vec<Injection>,
}

impl SyntheticSpec {
    fn validate(&self, dims: usize, latents: usize) -> Result<()> {
        for inj in &self.injections {
            if inj.duration == 0 || inj.start + inj.duration > self.length {
                return Err(Error::Config(format!(
                    "injection window {}..{} outside series of length {}",
                    inj.start,
                    inj.start + inj.duration,
                    self.length
                )));
            }
            if inj.kind == InjectionKind::Damping && !(0.0..1.0).contains(&inj.magnitude) {
                return Err(Error::Config(format!(
                    "damping factor must lie in [0, 1), got {}",
                    inj.magnitude
                )));
            }
            match &inj.target {
                Target::Latent(k) if *k >= latents => {
                    return Err(Error::Config(format!(
                        "injection targets latent {k} but there are {latents}"
                    )))
                }
                Target::Latent(_) if inj.kind == InjectionKind::SensorOffset => {
                    return Err(Error::Config("sensor offsets target observed dimensions".into()))
                }
                Target::Dims(ds) => {
                    if let Some(d) = ds.iter().find(|d| **d >= dims) {
                        return Err(Error::Config(format!(
                            "injection targets dimension {d} but there are {dims}"
                        )));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn labels(&self) -> Vec<bool> {
        let mut labels = vec![false; self.length];
        for inj in &self.injections {
            for l in &mut labels[inj.window()] {
                *l = true;
            }
        }
        labels
    }
}

/// `f(t) = cos(0.04t + 0.33π)·sin(0.2t) + t·5/300`.
pub fn univariate_signal(t: f64) -> f64 {
    (0.04 * t + 0.33 * PI).cos() * (0.2 * t).sin() + 5.0 / 300.0 * t
}

/// Univariate benchmark series at `t = 0..T−1`; noise variance 0.15 unless
/// `noiseless`.
pub fn gen_univariate(length: usize, seed: u64, noiseless: bool) -> LabeledSeries {
    let noise = if noiseless {
        NoiseLevel::None
    } else {
        NoiseLevel::Variance(DEFAULT_UNIVARIATE_NOISE)
    };
    let spec = SyntheticSpec {
        length,
        seed,
        injections: Vec::new(),
    };
    gen_univariate_with(&spec, noise).expect("no injections to validate")
}

/// Univariate series with injections applied to the noiseless signal.
pub fn gen_univariate_with(spec: &SyntheticSpec, noise: NoiseLevel) -> Result<LabeledSeries> {
    spec.validate(1, 0)?;
    let mut x: Vec<f64> = (0..spec.length).map(|t| univariate_signal(t as f64)).collect();
    for inj in &spec.injections {
        inj.apply(&mut x);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sd = noise.std_dev();
    let values = x
        .iter()
        .map(|v| {
            let e: f64 = StandardNormal.sample(&mut rng);
            DVector::from_element(1, v + sd * e)
        })
        .collect();
    let times = (0..spec.length).map(|t| t as f64).collect();
    LabeledSeries::new(times, values, Some(spec.labels()))
}

/// Shape of a multivariate generator: `y = C z + d + ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultivariateSpec {
    pub dims: usize,
    pub latents: Vec<KernelExpr>,
    pub noise_variance: f64,
    /// Standard deviation of the random offset entries.
    pub offset_scale: f64,
    /// Seed for the loading matrix and offset, kept apart from the series seed
    /// so that clean and corrupted draws can share one mixing.
    pub mixing_seed: u64,
}

#[derive(Debug, Clone)]
pub struct MultivariateSynth {
    pub series: LabeledSeries,
    /// Latent paths after injections, `[k][t]`.
    pub latents: Vec<Vec<f64>>,
    /// Orthonormal-column loading matrix.
    pub loading: DMatrix<f64>,
    pub offset: DVector<f64>,
}

/// Random `D × K` matrix with orthonormal columns.
pub fn random_orthonormal(dims: usize, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dims, k, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Sample a latent path at unit time steps from the kernel's state-space form.
pub fn sample_latent(kernel: &KernelExpr, length: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let k = kernel.build()?;
    let n = k.state_dim();
    let tr = k.discretize(1.0)?;
    let l0 = psd_factor(k.initial_cov());
    let lq = psd_factor(&tr.q);
    let mut normal = |n: usize| DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
    let mut x = l0 * normal(n);
    let mut out = Vec::with_capacity(length);
    for t in 0..length {
        if t > 0 {
            x = &tr.a * x + &lq * normal(n);
        }
        out.push(k.emission().dot(&x));
    }
    Ok(out)
}

pub fn gen_multivariate(spec: &SyntheticSpec, mv: &MultivariateSpec) -> Result<MultivariateSynth> {
    let kk = mv.latents.len();
    if kk == 0 || kk > mv.dims {
        return Err(Error::Config(format!(
            "need 1 ≤ K ≤ D, got K = {kk}, D = {}",
            mv.dims
        )));
    }
    if !(mv.noise_variance >= 0.0) {
        return Err(Error::ParameterDomain {
            name: "noise variance",
            requirement: "nonnegative",
            value: mv.noise_variance,
        });
    }
    spec.validate(mv.dims, kk)?;
    let mut mix_rng = ChaCha8Rng::seed_from_u64(mv.mixing_seed);
    let loading = random_orthonormal(mv.dims, kk, &mut mix_rng);
    let offset = DVector::from_fn(mv.dims, |_, _| {
        let e: f64 = StandardNormal.sample(&mut mix_rng);
        mv.offset_scale * e
    });

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut latents = mv
        .latents
        .iter()
        .map(|k| sample_latent(k, spec.length, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    for inj in &spec.injections {
        if let Target::Latent(k) = inj.target {
            inj.apply(&mut latents[k]);
        }
    }
    // Signal part C z per dimension, then dimension-targeted injections.
    let mut signal: Vec<Vec<f64>> = (0..mv.dims)
        .map(|i| {
            (0..spec.length)
                .map(|t| (0..kk).map(|k| loading[(i, k)] * latents[k][t]).sum())
                .collect()
        })
        .collect();
    for inj in &spec.injections {
        if let Target::Dims(ds) = &inj.target {
            for &d in ds {
                inj.apply(&mut signal[d]);
            }
        }
    }
    let sd = mv.noise_variance.sqrt();
    let values = (0..spec.length)
        .map(|t| {
            DVector::from_fn(mv.dims, |i, _| {
                let e: f64 = StandardNormal.sample(&mut rng);
                signal[i][t] + offset[i] + sd * e
            })
        })
        .collect();
    let times = (0..spec.length).map(|t| t as f64).collect();
    Ok(MultivariateSynth {
        series: LabeledSeries::new(times, values, Some(spec.labels()))?,
        latents,
        loading,
        offset,
    })
}

/// Explainability scenario: a Matérn latent plus daily and weekly cosines
/// mixed into ten sensors; the daily latent is amplified, the weekly latent
/// damped, and seven sensors receive an offset.
pub fn fig1_scenario(seed: u64) -> (SyntheticSpec, MultivariateSpec) {
    let mv = MultivariateSpec {
        dims: 10,
        latents: vec![
            KernelExpr::matern32(50.0, 1.0),
            KernelExpr::cosine(24.0, 1.0),
            KernelExpr::cosine(168.0, 1.0),
        ],
        noise_variance: 0.05 * 0.05,
        offset_scale: 1.0,
        mixing_seed: seed,
    };
    let spec = SyntheticSpec {
        length: 1000,
        seed: seed.wrapping_add(1),
        injections: vec![
            Injection {
                kind: InjectionKind::AmplitudeScale,
                start: 300,
                duration: 80,
                magnitude: 3.0,
                target: Target::Latent(1),
            },
            Injection {
                kind: InjectionKind::Damping,
                start: 550,
                duration: 120,
                magnitude: 0.2,
                target: Target::Latent(2),
            },
            Injection {
                kind: InjectionKind::SensorOffset,
                start: 820,
                duration: 80,
                magnitude: 1.0,
                target: Target::Dims((0..7).collect()),
            },
        ],
    };
    (spec, mv)
}

/// Robustness scenario: the univariate signal with two spikes and a change point.
pub fn fig2_scenario(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        length: 300,
        seed,
        injections: vec![
            Injection {
                kind: InjectionKind::Spike,
                start: 100,
                duration: 5,
                magnitude: 3.0,
                target: Target::Dims(vec![0]),
            },
            Injection {
                kind: InjectionKind::Spike,
                start: 170,
                duration: 3,
                magnitude: -2.5,
                target: Target::Dims(vec![0]),
            },
            Injection {
                kind: InjectionKind::ChangePoint,
                start: 230,
                duration: 5,
                magnitude: 2.0,
                target: Target::Dims(vec![0]),
            },
        ],
    }
}
