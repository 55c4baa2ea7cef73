use thiserror::Error;

use crate::swamp::SparseEstimate;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("topology error: {0}")]
    Topology(String),

    #[error("invalid value: {0}")]
    Value(String),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A NaN or infinity appeared mid-solve. Carries the last state whose
    /// entries were all finite.
    #[error("solver diverged at iteration {iteration}")]
    Diverged {
        iteration: usize,
        last_finite: Box<SparseEstimate>,
    },

    #[error("exhaustive search over {lines} lines exceeds the cap of {cap}")]
    SearchExplosion { lines: usize, cap: usize },

    #[error("refused: {0}")]
    Refused(String),

    #[error("trial {trial}: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
