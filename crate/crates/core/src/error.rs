use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input tensor or argument violates an operation's shape or range contract.
    #[error("rejected input: {0}")]
    RejectedInput(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    /// Cosine similarity or scoring against a zero-norm vector.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("defect generation failed: {0}")]
    Generation(String),

    #[error("training aborted: {0}")]
    Training(String),

    #[error("persistence error: {0}")]
    Persistence(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    /// Short stable identifier used in machine-parsable CLI error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::RejectedInput(_) => "rejected_input",
            Error::Configuration(_) => "configuration",
            Error::Degenerate(_) => "degenerate",
            Error::Generation(_) => "generation",
            Error::Training(_) => "training",
            Error::Persistence(_) => "persistence",
            Error::Evaluation(_) => "evaluation",
            Error::Io { .. } => "io",
            Error::Image { .. } => "image",
        }
    }

    /// An I/O failure tagged with the path involved.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

macro_rules! reject {
    ($($arg:tt)*) => {
        return Err($crate::error::Error::RejectedInput(format!($($arg)*)))
    };
}
pub(crate) use reject;
