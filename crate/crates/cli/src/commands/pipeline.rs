use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use ssgpfa::data::{load_benchmark_layout, load_csv, BenchmarkSeries, DatasetLayout, LabeledSeries, TimeAxis};
use ssgpfa::eval::{adjust_predictions, best_f1_sweep, best_f1_sweep_segments, flags, pointwise_metrics, EvalReport};
use ssgpfa::ssgpfa::{score_online, ScoredPoint, SsgpfaModel};
use ssgpfa::Error;

use super::synth::{generate, Generated};
use super::{check_dims, fit, prepare, print_json, write_json};
use crate::config::{RunConfig, Scenario};
use crate::error::CliError;

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let summary = match (cfg.scenario, cfg.dataset_layout) {
        (Some(_), Some(_)) => {
            return Err(CliError::Config(
                "--scenario and --dataset-layout are mutually exclusive".into(),
            ))
        }
        (Some(s), None) => run_scenario(cfg, s)?,
        (None, layout) => run_layout(cfg, layout.unwrap_or_default())?,
    };
    if let Some(path) = &cfg.output {
        write_json(path, &summary)?;
    }
    print_json(&summary)
}

fn score_test(model: &SsgpfaModel, test: &LabeledSeries, cfg: &RunConfig) -> Result<Vec<ScoredPoint>, CliError> {
    check_dims(model, test.dims(), "test series")?;
    let ys: Vec<_> = test.values.iter().map(|y| prepare(model, y)).collect();
    Ok(score_online(model, &test.times, &ys, cfg.robust_config())?)
}

/// Report at the configured fixed threshold, or at the best-F1 threshold.
fn evaluate(scores: &[f64], labels: &[bool], cfg: &RunConfig) -> Result<EvalReport, CliError> {
    Ok(match cfg.threshold {
        Some(alpha) => {
            if !labels.contains(&true) {
                return Err(Error::UndefinedRecall.into());
            }
            let adjusted = adjust_predictions(&flags(scores, alpha), labels);
            pointwise_metrics(&adjusted, labels, alpha)
        }
        None => best_f1_sweep(scores, labels)?,
    })
}

fn run_scenario(cfg: &RunConfig, scenario: Scenario) -> Result<serde_json::Value, CliError> {
    let Generated { train, test, .. } = generate(cfg, scenario)?;
    let mut cfg = cfg.clone();
    if scenario == Scenario::Fig1 && cfg.kernels.is_none() {
        // The generating kernels; the data are fitted on their raw scale.
        let (_, mv) = ssgpfa::data::synth::fig1_scenario(cfg.seed());
        cfg.kernels = Some(mv.latents.iter().map(|k| k.to_string()).collect::<Vec<_>>().join("; "));
    }
    let fitted = fit(&train, &cfg, scenario != Scenario::Fig1)?;
    let scored = score_test(&fitted.model, &test, &cfg)?;
    let scores: Vec<f64> = scored.iter().map(|p| p.score).collect();
    let labels = test.labels.clone().unwrap_or_else(|| vec![false; test.len()]);
    let rejected = scored.iter().filter(|p| !p.accepted).count();
    let mut out = json!({
        "scenario": scenario,
        "seed": cfg.seed(),
        "method": fitted.method,
        "latents": fitted.model.latents().iter().map(|k| k.to_string()).collect::<Vec<_>>(),
        "train_rows": train.len(),
        "test_rows": test.len(),
        "rejected": rejected,
        "rejected_in_anomaly_windows": scored.iter().zip(&labels).filter(|(p, l)| **l && !p.accepted).count(),
    });
    out["report"] = if labels.contains(&true) {
        serde_json::to_value(evaluate(&scores, &labels, &cfg)?)?
    } else {
        serde_json::Value::Null
    };
    if scenario == Scenario::Fig1 {
        out["attribution"] = fig1_attribution(cfg.seed(), &scored)?;
    }
    Ok(out)
}

/// Share of each latent-level injection window attributed to its latent,
/// and the smallest reconstruction error inside the sensor-offset window
/// relative to the median over unlabeled points.
fn fig1_attribution(seed: u64, scored: &[ScoredPoint]) -> Result<serde_json::Value, CliError> {
    let (spec, _) = ssgpfa::data::synth::fig1_scenario(seed);
    let dominant = |t: usize| scored[t].attribution.as_ref().and_then(|a| a.dominant_latent());
    let recon = |t: usize| scored[t].attribution.as_ref().map_or(f64::NAN, |a| a.reconstruction_error);
    let share = |i: usize, latent: usize| {
        let w = spec.injections[i].window();
        let n = w.len();
        w.filter(|&t| dominant(t) == Some(latent)).count() as f64 / n as f64
    };
    let mut normal: Vec<f64> = (0..scored.len())
        .filter(|t| !spec.injections.iter().any(|inj| inj.window().contains(t)))
        .map(recon)
        .filter(|v| !v.is_nan())
        .collect();
    normal.sort_by(f64::total_cmp);
    let median = normal.get(normal.len() / 2).copied().unwrap_or(f64::NAN);
    let offset_min = spec.injections[2].window().map(recon).fold(f64::INFINITY, f64::min);
    Ok(json!({
        "amplitude_window_share_latent_1": share(0, 1),
        "damping_window_share_latent_2": share(1, 2),
        "offset_window_min_reconstruction_ratio": offset_min / median,
    }))
}

#[derive(Debug, Serialize)]
struct SeriesResult {
    name: String,
    dims: usize,
    latents: usize,
    train_rows: usize,
    test_rows: usize,
    method: &'static str,
    log_likelihood: Option<f64>,
    rejected: usize,
    report: EvalReport,
}

#[derive(Debug, Serialize)]
struct Skipped {
    name: String,
    reason: String,
}

/// Scored test part of one entity.
struct Outcome {
    name: String,
    scores: Vec<f64>,
    labels: Vec<bool>,
    result: Result<SeriesResult, String>,
}

fn load_entities(input: &Path, layout: DatasetLayout) -> Result<Vec<BenchmarkSeries>, CliError> {
    if layout != DatasetLayout::Csv {
        return Ok(load_benchmark_layout(input, layout)?);
    }
    let (train, test) = (input.join("train.csv"), input.join("test.csv"));
    if !train.is_file() || !test.is_file() {
        return Err(Error::Input(format!("{} must contain train.csv and test.csv", input.display())).into());
    }
    let name = input
        .file_name()
        .map_or_else(|| "series".to_string(), |n| n.to_string_lossy().into_owned());
    Ok(vec![BenchmarkSeries {
        name,
        train: load_csv(train)?,
        test: load_csv(test)?,
    }])
}

fn run_entity(entity: BenchmarkSeries, axis: TimeAxis, cfg: &RunConfig) -> Result<Outcome, (String, CliError)> {
    let BenchmarkSeries { name, train, test } = entity;
    let (train, test) = (train.with_time_axis(axis), test.with_time_axis(axis));
    let labels = test
        .labels
        .clone()
        .ok_or_else(|| (name.clone(), CliError::Core(Error::Input("test part has no labels".into()))))?;
    let wrap = |e: CliError| (name.clone(), e);
    let fitted = fit(&train, cfg, true).map_err(wrap)?;
    let scored = score_test(&fitted.model, &test, cfg).map_err(wrap)?;
    let scores: Vec<f64> = scored.iter().map(|p| p.score).collect();
    let result = evaluate(&scores, &labels, cfg)
        .map(|report| SeriesResult {
            name: name.clone(),
            dims: test.dims(),
            latents: fitted.model.num_latents(),
            train_rows: train.len(),
            test_rows: test.len(),
            method: fitted.method,
            log_likelihood: fitted.log_likelihood(),
            rejected: scored.iter().filter(|p| !p.accepted).count(),
            report,
        })
        .map_err(|e| e.to_string());
    Ok(Outcome {
        name,
        scores,
        labels,
        result,
    })
}

fn run_layout(cfg: &RunConfig, layout: DatasetLayout) -> Result<serde_json::Value, CliError> {
    let input = cfg.input()?;
    let entities = load_entities(input, layout)?;
    if entities.is_empty() {
        return Err(Error::Input(format!("no series found under {}", input.display())).into());
    }
    let axis = cfg.time_axis_or(match layout {
        DatasetLayout::Csv => TimeAxis::Timestamp,
        _ => TimeAxis::Index,
    });
    log::info!("evaluating {} series from {}", entities.len(), input.display());
    let outcomes: Vec<_> = entities
        .into_par_iter()
        .map(|e| run_entity(e, axis, cfg))
        .collect();

    let mut series = Vec::new();
    let mut skipped = Vec::new();
    let mut scored = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(o) => {
                match o.result {
                    Ok(r) => series.push(r),
                    Err(reason) => skipped.push(Skipped { name: o.name, reason }),
                }
                scored.push((o.scores, o.labels));
            }
            Err((name, e)) => {
                log::warn!("{name}: {e}");
                skipped.push(Skipped {
                    name,
                    reason: e.to_string(),
                });
            }
        }
    }
    let segments: Vec<(&[f64], &[bool])> = scored.iter().map(|(s, l)| (s.as_slice(), l.as_slice())).collect();
    let summary = match cfg.threshold {
        None => best_f1_sweep_segments(&segments)?,
        Some(alpha) => {
            if !segments.iter().any(|(_, l)| l.contains(&true)) {
                return Err(Error::UndefinedRecall.into());
            }
            let (mut tp, mut fp, mut fn_) = (0, 0, 0);
            for (s, l) in &segments {
                let r = pointwise_metrics(&adjust_predictions(&flags(s, alpha), l), l, alpha);
                tp += r.true_positives;
                fp += r.false_positives;
                fn_ += r.false_negatives;
            }
            EvalReport::from_counts(alpha, tp, fp, fn_)
        }
    };
    Ok(json!({
        "layout": layout,
        "input": input,
        "series": series,
        "skipped": skipped,
        "summary": summary,
    }))
}
