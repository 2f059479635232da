use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use ssgpfa::data::csv::LABEL_COLUMN;
use ssgpfa::data::load_csv;
use ssgpfa::eval::{best_f1_sweep, range_adjusted_metrics, threshold_curve, write_curve_csv};
use ssgpfa::Error;

use super::{print_json, write_json};
use crate::config::RunConfig;
use crate::error::CliError;

/// Scores and, when present, labels read from a score CSV.
struct ScoreTable {
    scores: Vec<f64>,
    labels: Option<Vec<bool>>,
}

fn read_scores(path: &Path, column: &str) -> Result<ScoreTable, CliError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::Input(format!("cannot open {}: {e}", path.display())))?;
    let header = reader.headers()?.clone();
    let find = |name: &str| header.iter().position(|h| h.trim() == name);
    let score_idx = find(column)
        .ok_or_else(|| Error::Input(format!("{} has no `{column}` column", path.display())))?;
    let label_idx = find(LABEL_COLUMN);
    let mut table = ScoreTable {
        scores: Vec::new(),
        labels: label_idx.map(|_| Vec::new()),
    };
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 2;
        let cell = record.get(score_idx).unwrap_or("").trim();
        let score = if cell.is_empty() {
            f64::NAN
        } else {
            cell.parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("invalid score `{cell}`"),
            })?
        };
        table.scores.push(score);
        if let (Some(labels), Some(j)) = (table.labels.as_mut(), label_idx) {
            labels.push(match record.get(j).unwrap_or("").trim() {
                "1" | "true" | "True" => true,
                "0" | "false" | "False" => false,
                other => {
                    return Err(Error::Parse {
                        line,
                        message: format!("invalid label `{other}`"),
                    }
                    .into())
                }
            });
        }
    }
    Ok(table)
}

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let column = cfg.score_column.as_deref().unwrap_or("score");
    let table = read_scores(cfg.input()?, column)?;
    let labels = match &cfg.labels {
        Some(path) => load_csv(path)?
            .labels
            .ok_or_else(|| Error::Input(format!("{} has no `{LABEL_COLUMN}` column", path.display())))?,
        None => table.labels.ok_or_else(|| {
            CliError::Config(format!("scores carry no `{LABEL_COLUMN}` column; pass --labels"))
        })?,
    };
    if labels.len() != table.scores.len() {
        return Err(Error::Shape(format!("{} scores for {} labels", table.scores.len(), labels.len())).into());
    }
    if !labels.contains(&true) {
        return Err(Error::UndefinedRecall.into());
    }
    let report = match cfg.threshold {
        Some(alpha) => range_adjusted_metrics(&table.scores, &labels, alpha)?,
        None => best_f1_sweep(&table.scores, &labels)?,
    };
    if let Some(path) = &cfg.curve {
        let curve = threshold_curve(&table.scores, &labels)?;
        write_curve_csv(BufWriter::new(File::create(path)?), &curve)?;
    }
    if let Some(path) = &cfg.output {
        write_json(path, &report)?;
    }
    print_json(&report)
}
