use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate sample size T = {0}; need T >= 2 so that log T > 0")]
    DegenerateSample(usize),

    #[error(
        "memory parameter d = {0} is outside the weak-convergence domain d > 1/2 (validated cap 3)"
    )]
    TheoremDomain(f64),

    #[error("invalid process spec: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
