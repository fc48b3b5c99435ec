//! Error types shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by tensor algebra, planners, decomposition engines and
/// container operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("mode {mode} out of range for order-{order} tensor")]
    ModeOutOfRange { mode: usize, order: usize },

    #[error("rank out of range: {0}")]
    RankOutOfRange(String),

    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),

    #[error("invalid compression ratio {0} (must be positive)")]
    InvalidRatio(f64),

    #[error("relative error is undefined for a zero-norm reference tensor")]
    ZeroNorm,

    #[error("SVD failed to converge after {sweeps} sweeps")]
    SvdNoConvergence { sweeps: usize },

    #[error("singular normal equations in ALS sweep {sweep}")]
    SingularNormalEquations { sweep: usize },

    #[error("duplicate tensor name '{0}'")]
    DuplicateName(String),

    #[error("policy references unknown tensor name '{0}'")]
    UnknownTensor(String),

    #[error("role/arity mismatch for '{name}': {detail}")]
    RoleArity { name: String, detail: String },

    #[error("tensor '{name}' failed: {source}")]
    TensorFailed { name: String, source: Box<Error> },

    #[error("container name sets differ: {0}")]
    NameSetMismatch(String),
}

impl Error {
    /// Attach the name of the container entry an operation failed on.
    pub(crate) fn for_tensor(self, name: &str) -> Error {
        Error::TensorFailed {
            name: name.to_string(),
            source: Box::new(self),
        }
    }
}
