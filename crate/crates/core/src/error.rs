use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The covariance of a model is not symmetric positive definite.
    #[error("model invariant violated: {0}")]
    Model(String),

    #[error("matrix is singular: {0}")]
    Singular(String),

    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    IterationLimit { iterations: usize, residual: f64 },

    /// Root bracketing, factorisation or other numerical breakdown.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Difference quotients at the two steps disagree.
    #[error("unstable numerical derivative: relative step disagreement {relative:e}")]
    UnstableDerivative { relative: f64 },

    #[error("budget exceeded: {0}")]
    Budget(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
