use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use ssgpfa::data::synth::{
    fig1_scenario, fig2_scenario, gen_multivariate, gen_univariate_with, MultivariateSpec, NoiseLevel,
    SyntheticSpec, DEFAULT_UNIVARIATE_NOISE,
};
use ssgpfa::data::{save_csv, LabeledSeries};

use super::print_json;
use crate::config::{RunConfig, Scenario};
use crate::error::CliError;

/// Rows of the univariate scenarios used for training.
pub const UNIVARIATE_TRAIN_ROWS: usize = 60;
pub const DEFAULT_UNIVARIATE_LENGTH: usize = 300;
/// Offset between the test seed and the seed of the clean training draw.
pub const CLEAN_TRAIN_SEED_OFFSET: u64 = 1000;

/// A generated scenario with its train and test parts.
pub struct Generated {
    pub train: LabeledSeries,
    pub test: LabeledSeries,
    pub description: ScenarioDescription,
}

#[derive(Debug, Serialize)]
pub struct ScenarioDescription {
    pub scenario: Scenario,
    pub seed: u64,
    pub train: SyntheticSpec,
    pub test: SyntheticSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub multivariate: Option<MultivariateSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseLevel>,
    /// First row of the test part within the generated series.
    pub test_start: usize,
}

pub fn generate(cfg: &RunConfig, scenario: Scenario) -> Result<Generated, CliError> {
    let (seed, length) = (cfg.seed(), cfg.length);
    if length.is_some() && scenario != Scenario::Univariate {
        log::warn!("--length only applies to the univariate scenario");
    }
    let noise = if cfg.noise_std.unwrap_or(false) {
        NoiseLevel::StdDev(DEFAULT_UNIVARIATE_NOISE)
    } else {
        NoiseLevel::Variance(DEFAULT_UNIVARIATE_NOISE)
    };
    if cfg.noise_std.is_some() && scenario == Scenario::Fig1 {
        log::warn!("--noise-std does not apply to the fig1 scenario");
    }
    match scenario {
        Scenario::Fig1 => {
            let (spec, mv) = fig1_scenario(seed);
            let clean = SyntheticSpec {
                length: spec.length,
                seed: seed.wrapping_add(CLEAN_TRAIN_SEED_OFFSET),
                injections: Vec::new(),
            };
            let train = gen_multivariate(&clean, &mv)?.series;
            let test = gen_multivariate(&spec, &mv)?.series;
            Ok(Generated {
                train,
                test,
                description: ScenarioDescription {
                    scenario,
                    seed,
                    train: clean,
                    test: spec,
                    multivariate: Some(mv),
                    noise: None,
                    test_start: 0,
                },
            })
        }
        Scenario::Fig2 | Scenario::Univariate => {
            let spec = match scenario {
                Scenario::Fig2 => fig2_scenario(seed),
                _ => SyntheticSpec {
                    length: length.unwrap_or(DEFAULT_UNIVARIATE_LENGTH),
                    seed,
                    injections: Vec::new(),
                },
            };
            if spec.length <= UNIVARIATE_TRAIN_ROWS {
                return Err(CliError::Config(format!(
                    "length must exceed the {UNIVARIATE_TRAIN_ROWS} training rows"
                )));
            }
            let series = gen_univariate_with(&spec, noise)?;
            let (train, test) = series.split_at(UNIVARIATE_TRAIN_ROWS);
            Ok(Generated {
                train,
                test,
                description: ScenarioDescription {
                    scenario,
                    seed,
                    train: spec.clone(),
                    test: spec,
                    multivariate: None,
                    noise: Some(noise),
                    test_start: UNIVARIATE_TRAIN_ROWS,
                },
            })
        }
    }
}

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let scenario = cfg
        .scenario
        .ok_or_else(|| CliError::Config("--scenario is required".into()))?;
    let dir: &Path = cfg
        .output
        .as_deref()
        .ok_or_else(|| CliError::Config("--output DIR is required".into()))?;
    let g = generate(cfg, scenario)?;
    std::fs::create_dir_all(dir)?;
    let path = |f: &str| -> PathBuf { dir.join(f) };
    save_csv(path("train.csv"), &g.train)?;
    save_csv(path("test.csv"), &g.test)?;
    super::write_json(&path("scenario.json"), &g.description)?;
    print_json(&json!({
        "scenario": scenario,
        "seed": g.description.seed,
        "dims": g.test.dims(),
        "train_rows": g.train.len(),
        "test_rows": g.test.len(),
        "output": dir,
    }))
}
