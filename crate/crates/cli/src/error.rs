use std::fmt;

/// Process exit codes.
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_EVAL_DOMAIN: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(ssgpfa::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use ssgpfa::Error as E;
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Core(e) => match e {
                E::Degenerate { .. } | E::DegenerateLoading { .. } | E::NonFiniteLikelihood { .. } => {
                    EXIT_NUMERICAL
                }
                E::UndefinedRecall => EXIT_EVAL_DOMAIN,
                _ => EXIT_CONFIG,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ssgpfa::Error> for CliError {
    fn from(e: ssgpfa::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}
