use thiserror::Error;

/// Errors raised anywhere in the modelling, solving and certification pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("objective matrix is not positive semidefinite (min eigenvalue {min_eig:.3e})")]
    InvalidObjective { min_eig: f64 },

    #[error("invalid certificate: {0}")]
    InvalidCertificate(String),

    #[error("largest eigenvalue is not simple (lambda1 - lambda2 = {gap:.3e})")]
    DegenerateSpectrum { gap: f64 },

    #[error("block violates its structural constraints (residual {residual:.3e})")]
    InvalidBlock { residual: f64 },

    #[error("unbound symbol in constraint generation: {0}")]
    InvalidBinding(String),

    #[error("degenerate scenario: {0}")]
    DegenerateScenario(String),

    #[error("channel entry requires sum lambda1 >= {required:.6}, got {actual:.6}")]
    ChannelEntryViolation { required: f64, actual: f64 },

    #[error("blocks are not rank one (eigenvalue gap {gap:.3e})")]
    NotRankOne { gap: f64 },

    #[error("extraction failed: orthogonality defect {defect:.3e}")]
    ExtractionFailed { defect: f64 },

    #[error("conic program infeasible")]
    Infeasible,

    #[error("conic program unbounded")]
    Unbounded,

    #[error("solver failure: {0}")]
    NumericalFailure(String),

    #[error("i/o error: {0}")]
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
        Error::Io(e.to_string())
    }
}
