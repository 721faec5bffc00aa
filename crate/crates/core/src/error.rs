use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain where the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("covariance factorization failed: {0}")]
    Factorization(String),

    #[error("picard iteration did not converge after {iterations} iterations (residual {residual:e}); shrink the horizon")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("jet order exhausted: word of length {word_len} needs order {needed}, jets carry {available}")]
    JetOrderExhausted {
        word_len: usize,
        needed: usize,
        available: usize,
    },

    #[error("budget exceeded: {what} needs {needed}, budget is {budget}")]
    BudgetExceeded {
        what: &'static str,
        needed: usize,
        budget: usize,
    },

    #[error("tail series did not start decaying within {terms} terms")]
    DivergentTail { terms: usize },

    #[error("malformed permutation: {0}")]
    MalformedPermutation(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
