//! Error taxonomy shared by every module in the crate.

use thiserror::Error;

/// Crate-wide error type. Variants map onto distinct CLI exit codes, so a
/// failure class is recoverable from the process status alone.
#[derive(Debug, Error)]
pub enum Error {
    /// A tensor, batch, or parameter vector had the wrong dimensions.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// An invalid configuration value or combination (caught before any work runs).
    #[error("invalid config: {0}")]
    Config(String),

    /// A numeric invariant broke at runtime: non-finite gradient, zero-weight
    /// posterior, probability outside [0, 1].
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A step-size schedule violated its contract (non-positive or increasing steps).
    #[error("schedule error: {0}")]
    Schedule(String),

    /// Malformed input data; carries the 1-based row number when known.
    #[error("parse error: {0}")]
    Parse(String),

    /// An index referred outside its collection.
    #[error("index out of range: {0}")]
    Index(String),

    /// A categorical value fell outside the schema's pinned level list.
    #[error("encoding error: {0}")]
    Encoding(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Parse failure at a known 1-based data row.
    pub fn parse_at(row: usize, msg: impl std::fmt::Display) -> Self {
        Error::Parse(format!("row {row}: {msg}"))
    }

    /// Prefixes the message with the pipeline stage that failed, keeping the
    /// variant (and therefore the exit code) intact.
    pub fn with_stage(self, stage: &str) -> Self {
        match self {
            Error::Shape(m) => Error::Shape(format!("{stage}: {m}")),
            Error::Config(m) => Error::Config(format!("{stage}: {m}")),
            Error::Numeric(m) => Error::Numeric(format!("{stage}: {m}")),
            Error::Schedule(m) => Error::Schedule(format!("{stage}: {m}")),
            Error::Parse(m) => Error::Parse(format!("{stage}: {m}")),
            Error::Index(m) => Error::Index(format!("{stage}: {m}")),
            Error::Encoding(m) => Error::Encoding(format!("{stage}: {m}")),
            Error::Io(e) => Error::Io(std::io::Error::new(
                e.kind(),
                format!("{stage}: {e}"),
            )),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
