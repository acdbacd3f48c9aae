use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("matrix is singular to working precision (column {0})")]
    Singular(usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid action {action} (environment has {n_actions} actions)")]
    InvalidAction { action: usize, n_actions: usize },

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("too few non-zero pairs for the signed-rank test: {0} (need at least 5)")]
    TooFewPairs(usize),

    #[error("learning curves are not aligned: {0}")]
    MisalignedCurves(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    /// Failures from a least-squares factorization, which the orchestrator
    /// treats as skippable.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NotPositiveDefinite { .. } | Error::Singular(_))
    }
}
