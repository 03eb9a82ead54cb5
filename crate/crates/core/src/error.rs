use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by every stage of the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate field: {0}")]
    DegenerateField(String),

    #[error("level set is empty: the field never crosses the isolevel")]
    EmptySurface,

    #[error("shape rejected: {0}")]
    ShapeRejected(String),

    #[error("state error: {0}")]
    State(String),

    #[error("observation could not be ingested: {0}")]
    Ingest(String),

    #[error("training diverged at iteration {iteration} (loss = {loss})")]
    Diverged { iteration: u64, loss: f64 },

    #[error("truncated file {path}: {detail}")]
    TruncatedFile { path: PathBuf, detail: String },

    #[error("unsupported version in {path}: found {found}, expected {expected}")]
    VersionMismatch {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    #[error("malformed {kind} data: {detail}")]
    Format { kind: &'static str, detail: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn format(kind: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            kind,
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
