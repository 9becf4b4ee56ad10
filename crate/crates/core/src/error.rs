use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad input: violates a documented precondition or invariant.
    #[error("validation: {0}")]
    Validation(String),
    /// A slice whose averaged gradient has rank < 2.
    #[error("degenerate slice {slice}: singular values {sigma:?}")]
    DegenerateSlice { slice: usize, sigma: [f64; 3] },
    /// Linear system could not be factorized or solved.
    #[error("singular system: {0}")]
    Singular(String),
    /// Iterative solver ran out of iterations.
    #[error("no convergence after {iterations} iterations (last residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
