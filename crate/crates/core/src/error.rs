use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Malformed input: wrong shapes, out-of-range parameters, non-finite numbers.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// The induced Markov chain does not have a unique, strictly positive
    /// stationary distribution.
    #[error("induced chain is not ergodic: {0}")]
    NotErgodic(String),

    #[error("dynamics matrix is singular for policy {policy}")]
    SingularDynamics { policy: String },

    #[error("operation requires dimension {expected}, got {got}")]
    UnsupportedDimension { expected: usize, got: usize },

    #[error("regions {0} and {1} are not adjacent")]
    NotAdjacent(usize, usize),

    #[error("dynamics of policy {policy} are not positive definite (margin {margin:e})")]
    NotPositiveDefinite { policy: String, margin: f64 },

    #[error("integration step failed at t = {t}, theta = {theta:?}: {reason}")]
    StepFailure {
        t: f64,
        theta: Vec<f64>,
        reason: String,
    },

    #[error("iterate left the finite range at n = {iter} (norm {norm:e})")]
    NonFinite { iter: u64, norm: f64 },

    #[error("numerical check failed: {0}")]
    Numerical(String),
}

impl Error {
    /// True for failures of a mathematical assumption or of an integration,
    /// as opposed to malformed input.
    pub fn is_assumption_failure(&self) -> bool {
        !matches!(self, Error::Invalid(_))
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Invalid(msg.into())
}
