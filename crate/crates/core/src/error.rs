// SPDX-License-Identifier: MIT OR Apache-2.0

//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced by graftlab.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Shapes do not agree for an operation or a parameter table.
    #[error("shape error: {0}")]
    Shape(String),

    /// An index (token id, target id, position) is out of range.
    #[error("index error: {0}")]
    Index(String),

    /// An operation produced NaN or an infinity.
    #[error("non-finite value produced by {op}")]
    NonFinite {
        /// Operation that produced the value.
        op: &'static str,
    },

    /// Misuse of the autodiff tape.
    #[error("tape error: {0}")]
    Tape(String),

    /// Invalid configuration value.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed or incompatible checkpoint file.
    #[error("checkpoint format error: {0}")]
    Format(String),

    /// Grafting scheme could not be built.
    #[error("scheme error: {0}")]
    Scheme(String),

    /// Data generation failure.
    #[error("data error: {0}")]
    Data(String),

    /// Training diverged.
    #[error("training diverged at epoch {epoch}: {detail}")]
    Divergence {
        /// Epoch (1-based) in which divergence was detected.
        epoch: usize,
        /// Human-readable diagnostic.
        detail: String,
    },

    /// I/O failure with the path involved.
    #[error("I/O error on {path}: {source}")]
    Io {
        /// Path being read or written.
        path: PathBuf,
        /// Underlying error.
        #[source]
        source: std::io::Error,
    },

    /// JSON (de)serialization failure.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// CSV (de)serialization failure.
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
