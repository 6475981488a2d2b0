use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// The mode matrix lost full column rank during re-orthonormalization.
    #[error("degenerate mode matrix (smallest |R_ii| = {min_diag:.3e}); time step too large or state invalid")]
    Degenerate { min_diag: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("divergent at {0}")]
    Divergent(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("ensemble failed: {aborted} of {total} trajectories aborted (first: {first})")]
    EnsembleAborted {
        aborted: usize,
        total: usize,
        first: String,
    },

    #[error("noise stream desynchronized: expected {expected} draws, found {found}")]
    NoiseDesync { expected: u64, found: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
