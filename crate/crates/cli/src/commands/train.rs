use serde_json::json;
use ssgpfa::data::{load_csv, TimeAxis};

use super::{fit, print_json};
use crate::config::RunConfig;
use crate::error::CliError;

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let model_path = cfg.model_path()?;
    let series = load_csv(cfg.input()?)?.with_time_axis(cfg.time_axis_or(TimeAxis::Timestamp));
    log::info!("training on {} rows with {} dimensions", series.len(), series.dims());
    let fitted = fit(&series, cfg, true)?;
    let model = &fitted.model;
    model.save(model_path)?;
    log::info!("model written to {}", model_path.display());
    print_json(&json!({
        "model": model_path,
        "method": fitted.method,
        "rows": series.len(),
        "dims": model.dims(),
        "latents": model.latents().iter().map(|k| k.to_string()).collect::<Vec<_>>(),
        "mode": model.mode(),
        "standardized": model.standardization.is_some(),
        "log_likelihood": fitted.log_likelihood(),
        "training_log": model.training_log,
    }))
}
