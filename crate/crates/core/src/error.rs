use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A kernel or model parameter lies outside its admissible domain.
    #[error("parameter `{name}` must be {requirement}, got {value}")]
    ParameterDomain {
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("unsupported kernel combination: {0}")]
    UnsupportedCombination(String),

    /// Singular or ill-conditioned matrix encountered during inference.
    #[error("numerical degeneracy in {what}{}{}", fmt_index(" at time index ", *.time_index), fmt_index(" for latent ", *.latent))]
    Degenerate {
        what: String,
        time_index: Option<usize>,
        latent: Option<usize>,
    },

    #[error("loading matrix is rank deficient (smallest singular value {smallest_singular_value:e})")]
    DegenerateLoading { smallest_singular_value: f64 },

    #[error("non-finite log-likelihood at EM iteration {iteration}")]
    NonFiniteLikelihood { iteration: usize },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    /// Recall is undefined when the label sequence has no positives.
    #[error("labels contain no anomalies; recall is undefined")]
    UndefinedRecall,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn fmt_index(prefix: &str, index: Option<usize>) -> String {
    index.map(|i| format!("{prefix}{i}")).unwrap_or_default()
}

impl Error {
    pub(crate) fn degenerate(what: impl Into<String>) -> Self {
        Error::Degenerate {
            what: what.into(),
            time_index: None,
            latent: None,
        }
    }

    /// Attach a time index to a degeneracy error, leaving other errors untouched.
    pub(crate) fn at_time(self, index: usize) -> Self {
        match self {
            Error::Degenerate { what, latent, .. } => Error::Degenerate {
                what,
                time_index: Some(index),
                latent,
            },
            other => other,
        }
    }

    pub(crate) fn for_latent(self, k: usize) -> Self {
        match self {
            Error::Degenerate {
                what, time_index, ..
            } => Error::Degenerate {
                what,
                time_index,
                latent: Some(k),
            },
            other => other,
        }
    }
}

pub(crate) fn require_positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::ParameterDomain {
            name,
            requirement: "positive and finite",
            value,
        })
    }
}
