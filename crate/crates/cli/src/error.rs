use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Core(isl_core::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("schema mismatch in {path}: {message}")]
    Schema { path: PathBuf, message: String },

    #[error("property checks failed: {0}")]
    PropsFailed(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl From<isl_core::Error> for CliError {
    fn from(e: isl_core::Error) -> Self {
        match e {
            isl_core::Error::Diverged { .. } => Self::Diverged(e.to_string()),
            other => Self::Core(other),
        }
    }
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Schema { .. } => 2,
            Self::Core(e) => match e {
                isl_core::Error::Io(_) | isl_core::Error::Checkpoint(_) => 4,
                _ => 2,
            },
            Self::Diverged(_) => 3,
            Self::Io { .. } | Self::Csv(_) => 4,
            Self::PropsFailed(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Config(_) => "invalid_config",
            Self::Diverged(_) => "diverged",
            Self::Io { .. } | Self::Csv(_) => "io",
            Self::Core(isl_core::Error::Io(_) | isl_core::Error::Checkpoint(_)) => "io",
            Self::Core(_) => "invalid_input",
            Self::Schema { .. } => "schema_mismatch",
            Self::PropsFailed(_) => "props_failed",
        }
    }

    /// One-line JSON object for stderr.
    pub fn report(&self) -> String {
        serde_json::json!({
            "error": self.kind(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        })
        .to_string()
    }
}
