use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("capacity exceeded: {requested} particle-steps requested, cap is {cap}")]
    Capacity { requested: u128, cap: u64 },

    #[error("empty sample")]
    EmptySample,

    /// The sample admits no positive diffusion estimate. The drift estimate
    /// (which does not depend on sigma) is still reported.
    #[error("degenerate sample: {reason}")]
    DegenerateSample {
        reason: String,
        lateral_drift_hat: Vec<f64>,
    },

    #[error("cannot test: {0}")]
    CannotTest(String),

    #[error("malformed sample file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
