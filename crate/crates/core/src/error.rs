//! Crate-wide error type.

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
    #[error("format error: {0}")]
    Format(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("size error: {0}")]
    Size(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("unbound leaf `{0}`")]
    Binding(String),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("ill-conditioned metric: {0}")]
    IllConditioned(String),
    #[error("training diverged: {0}")]
    Training(String),
    #[error("invalid config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag, used in CLI error JSON and failed report rows.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Format(_) => "format",
            Error::Unsupported(_) => "unsupported",
            Error::Degenerate(_) => "degenerate",
            Error::Size(_) => "size",
            Error::Shape(_) => "shape",
            Error::Binding(_) => "binding",
            Error::Contract(_) => "contract",
            Error::Numeric(_) => "numeric",
            Error::EmptyInput(_) => "empty_input",
            Error::UndefinedMetric(_) => "undefined_metric",
            Error::IllConditioned(_) => "ill_conditioned",
            Error::Training(_) => "training",
            Error::Config(_) => "config",
        }
    }
}
