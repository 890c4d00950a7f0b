use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: malformed record: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: schema violation: {message}")]
    Schema { line: usize, message: String },

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("index {index} out of range for length {len}")]
    Bounds { index: usize, len: usize },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("value outside domain: {0}")]
    Domain(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable identifier used in machine-readable CLI errors.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Schema { .. } => "schema",
            Error::Validation(_) => "validation",
            Error::Bounds { .. } => "bounds",
            Error::DegenerateData(_) => "degenerate_data",
            Error::Shape(_) => "shape",
            Error::Domain(_) => "domain",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::UndefinedMetric(_) => "undefined_metric",
            Error::Checkpoint(_) => "checkpoint",
            Error::Config(_) => "config",
        }
    }
}
