use thiserror::Error;

/// Errors raised by the witness, model, simulation and estimation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("uncertainty relation violated: Vx*Vp = {product} < 1/4")]
    UncertaintyViolation { product: f64 },

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("heralding probability is zero (no-click probability {p0prime})")]
    ZeroHeralding { p0prime: f64 },

    #[error("Fock truncation at N_max = {n_max} leaves tail mass {tail:e}")]
    Truncation { n_max: usize, tail: f64 },

    #[error("no threshold found: {0}")]
    NotFound(String),

    #[error("degenerate witness covariance: deltaW = 0 at a = {a}")]
    DegenerateCovariance { a: f64 },

    #[error("sampling envelope violated: acceptance probability {value} outside [0, 1]")]
    EnvelopeViolation { value: f64 },

    #[error("phase bin {bin} has no samples")]
    EmptyBin { bin: usize },

    #[error("dataset contains no samples")]
    EmptyDataset,

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
