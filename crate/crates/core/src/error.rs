use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    /// A scenario or configuration value violates a documented invariant.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("unknown client {0}")]
    UnknownClient(usize),

    #[error("unknown datacenter {0}")]
    UnknownDatacenter(usize),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid replication descriptor: {0}")]
    InvalidDescriptor(String),

    #[error("insufficient capacity in datacenter {datacenter} for the datum of client {client}")]
    InsufficientCapacity { datacenter: usize, client: usize },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("scenario hash mismatch: {first} ({first_path}) vs {second} ({second_path})")]
    HashMismatch {
        first: String,
        first_path: PathBuf,
        second: String,
        second_path: PathBuf,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable identifier used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Validation(_) => "validation",
            Error::UnknownClient(_) => "unknown_client",
            Error::UnknownDatacenter(_) => "unknown_datacenter",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::InvalidDescriptor(_) => "invalid_descriptor",
            Error::InsufficientCapacity { .. } => "insufficient_capacity",
            Error::Invariant(_) => "invariant",
            Error::Diverged(_) => "diverged",
            Error::Checkpoint(_) => "checkpoint",
            Error::Config(_) => "config",
            Error::HashMismatch { .. } => "hash_mismatch",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
