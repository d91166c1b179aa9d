use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument fell outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A model parameter violates one of its invariants.
    #[error("invalid model: {invariant} ({detail})")]
    InvalidModel {
        invariant: &'static str,
        detail: String,
    },

    #[error("solvability condition 1 - gamma*M(t) + lambda(t) >= 0 violated: minimum {min_value:.6e} at t = {at:.6}")]
    AssumptionViolated { min_value: f64, at: f64 },

    #[error("scheme breakdown at step {step} (t = {t:.6}): iterate {value:.6e} is not positive, increase N")]
    SchemeBreakdown { step: usize, t: f64, value: f64 },

    #[error("unsupported input: {0}")]
    Unsupported(String),

    #[error("no root satisfying the transversality conditions: {0}")]
    NoFeasibleRoot(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn invalid(invariant: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidModel {
            invariant,
            detail: detail.into(),
        }
    }
}
