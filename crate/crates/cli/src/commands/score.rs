use std::fs::File;
use std::io::{self, BufWriter, Write};

use serde_json::json;
use ssgpfa::data::csv::{format_value, LABEL_COLUMN, TIME_COLUMN};
use ssgpfa::data::{SeriesReader, TimeAxis};
use ssgpfa::ssgpfa::{OnlineScorer, ScoredPoint, SsgpfaModel};

use super::{check_dims, prepare, print_json};
use crate::config::RunConfig;
use crate::error::CliError;

/// Which per-step quantities the output CSV carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Columns {
    /// Joint and per-dimension scores plus per-latent attribution scores.
    Scores,
    /// Dominant latent, projected latent values and attribution scores.
    Attribution,
}

impl Columns {
    fn header(self, model: &SsgpfaModel, names: &[String], labels: bool) -> Vec<String> {
        let k = model.num_latents();
        let mut h = vec![TIME_COLUMN.to_string()];
        match self {
            Columns::Scores => {
                h.push("score".into());
                h.extend(names.iter().map(|n| format!("score_{n}")));
                h.push("accepted".into());
                h.extend((0..k).map(|i| format!("nll_latent_{i}")));
                h.push("reconstruction_error".into());
            }
            Columns::Attribution => {
                h.push("dominant_latent".into());
                h.extend((0..k).map(|i| format!("projected_{i}")));
                h.extend((0..k).map(|i| format!("nll_latent_{i}")));
                h.extend(["reconstruction_error", "score", "accepted"].map(String::from));
            }
        }
        if labels {
            h.push(LABEL_COLUMN.into());
        }
        h
    }

    fn row(self, raw_time: &str, p: &ScoredPoint, k: usize, label: Option<bool>, out: &mut Vec<String>) {
        let nan = |n: usize| std::iter::repeat_n(String::new(), n);
        let accepted = if p.accepted { "1" } else { "0" }.to_string();
        let attr = p.attribution.as_ref();
        let nll = || -> Vec<String> {
            attr.map_or_else(|| nan(k).collect(), |a| a.per_latent_nll.iter().map(|v| format_value(*v)).collect())
        };
        let recon = attr.map_or(String::new(), |a| format_value(a.reconstruction_error));
        out.clear();
        out.push(raw_time.to_string());
        match self {
            Columns::Scores => {
                out.push(format_value(p.score));
                out.extend(p.marginal_scores.iter().map(|v| format_value(*v)));
                out.push(accepted);
                out.extend(nll());
                out.push(recon);
            }
            Columns::Attribution => {
                out.push(attr.and_then(|a| a.dominant_latent()).map_or(String::new(), |i| i.to_string()));
                match attr {
                    Some(a) => out.extend(a.projected_latents.iter().map(|v| format_value(*v))),
                    None => out.extend(nan(k)),
                }
                out.extend(nll());
                out.push(recon);
                out.push(format_value(p.score));
                out.push(accepted);
            }
        }
        if let Some(l) = label {
            out.push(if l { "1" } else { "0" }.into());
        }
    }
}

/// Stream the input CSV row by row through a saved model.
pub fn run(cfg: &RunConfig, columns: Columns) -> Result<(), CliError> {
    let model = SsgpfaModel::load(cfg.model_path()?)?;
    let mut reader = SeriesReader::open(cfg.input()?)?;
    check_dims(&model, reader.dims(), "input")?;
    let index_time = cfg.time_axis_or(TimeAxis::Timestamp) == TimeAxis::Index;
    let mut scorer = OnlineScorer::new(&model, cfg.robust_config())?;

    let sink: Box<dyn Write> = match &cfg.output {
        Some(path) => Box::new(File::create(path)?),
        None => Box::new(io::stdout().lock()),
    };
    let mut out = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(sink));
    out.write_record(columns.header(&model, reader.names(), reader.has_labels()))?;

    let k = model.num_latents();
    let (mut rows, mut rejected) = (0usize, 0usize);
    let mut record = Vec::new();
    while let Some(row) = reader.next_row() {
        let row = row?;
        let time = if index_time { rows as f64 } else { row.time };
        let p = scorer.step(time, &prepare(&model, &row.values))?;
        rows += 1;
        rejected += usize::from(!p.accepted);
        columns.row(&row.raw_timestamp, &p, k, row.label, &mut record);
        out.write_record(&record)?;
    }
    out.flush()?;
    drop(out);
    log::info!("scored {rows} rows, {rejected} rejected");
    if let Some(path) = &cfg.output {
        print_json(&json!({ "output": path, "rows": rows, "rejected": rejected }))?;
    }
    Ok(())
}
