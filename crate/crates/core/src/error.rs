use std::path::PathBuf;

use thiserror::Error;

use crate::energy::EnergyBreakdown;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A node produced NaN or an infinity during graph evaluation.
    #[error("non-finite value {value} at node {node} ({op})")]
    NonFinite { node: usize, op: &'static str, value: f64 },

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("point {point:?} lies outside the domain")]
    Domain { point: Vec<f64> },

    #[error("invalid argument: {0}")]
    Argument(String),

    /// Invalid or inconsistent configuration; `key` is the dotted path of the offending entry.
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("training diverged: {reason}")]
    Divergence {
        reason: String,
        breakdown: Option<Box<EnergyBreakdown>>,
    },

    #[error("elastic pre-solve did not converge: boundary loss {bc_loss:.3e} above threshold {lambda:.1e}")]
    NonConvergence {
        bc_loss: f64,
        lambda: f64,
        history: Vec<f64>,
    },

    #[error("oracle rejected parameters: {0}")]
    Oracle(String),

    #[error("I/O error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serialize(String),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
