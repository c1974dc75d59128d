use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("network is not observable: {0}")]
    Observability(String),

    #[error("power flow did not converge after {iterations} iterations (mismatch {mismatch:.3e})")]
    PowerFlowDivergence { iterations: usize, mismatch: f64 },

    #[error("WLS did not converge after {iterations} iterations (last step {last_step:.3e})")]
    WlsNonConvergence {
        iterations: usize,
        last_step: f64,
        last_iterate: Vec<f64>,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("bad data cannot be identified: every residual belongs to a critical measurement")]
    IdentificationImpossible,

    #[error("invalid anomaly spec: {0}")]
    InvalidAnomaly(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::AtStep {
            step,
            source: Box::new(self),
        }
    }

    /// Strips any step wrapper and returns the underlying error.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtStep { source, .. } => source.root(),
            e => e,
        }
    }
}
