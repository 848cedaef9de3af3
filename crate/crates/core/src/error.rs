use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("no stability clause holds: {0}")]
    Unstable(String),

    #[error("company {0} has an infinite interaction rate but a non-positive mean drift")]
    InfiniteRateWithNonpositiveDrift(usize),

    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    #[error("argument outside the domain: {0}")]
    Domain(String),

    #[error("drift condition violated: {0}")]
    Drift(String),

    #[error("root continuation failed: {0}")]
    NoConvergence(String),

    #[error("point lies on the kernel curve (|psi1 + psi2| = {0:e})")]
    OnKernelCurve(f64),

    #[error("Wiener-Hopf quadrature failed: {0}")]
    QuadratureFailure(String),

    #[error("inversion node {node} is not above the transform abscissa {abscissa}")]
    NodesBelowDomain { node: f64, abscissa: f64 },

    #[error("inversion unstable: {0}")]
    InversionUnstable(String),

    #[error("no surviving capital below {0}")]
    BracketFailure(f64),

    #[error("conditional acceptance rate {rate:.4} below 1% after {attempts} attempts")]
    AcceptanceTooLow { rate: f64, attempts: u64 },

    #[error("too many bracket failures: {failures} of {replicas} replicas")]
    TooManyBracketFailures { failures: usize, replicas: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
