use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("channel matrix is rank deficient: |r[{column},{column}]| = {magnitude:e}")]
    RankDeficient { column: usize, magnitude: f64 },

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("entry {index} is not a constellation point")]
    NotAConstellationPoint { index: usize },

    #[error("exhaustive search over {candidates} candidates exceeds the limit of {limit}")]
    TooLarge { candidates: f64, limit: f64 },

    #[error("training loss became non-finite at epoch {epoch}")]
    DivergedToNonFinite { epoch: usize },

    #[error("malformed file, field `{field}`: {reason}")]
    Format { field: String, reason: String },

    #[error("no lambda schedule for n_t = {n_t}")]
    NoSchedule { n_t: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn format(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Format {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
