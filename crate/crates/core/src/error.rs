use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),

    #[error("unknown scalar code {0}")]
    UnknownScalarCode(u8),

    #[error("unknown axis code {0}")]
    UnknownAxisCode(u8),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("declared extents overflow the addressable size")]
    DimsOverflow,

    #[error("structural error: {0}")]
    Structure(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("operator norm is zero; step size undefined")]
    ZeroOperator,

    #[error("data has nonzero entries outside the sampling mask")]
    DataOffMask,

    #[error("empty matrix")]
    EmptyMatrix,

    #[error("outer iteration {outer}: {source}")]
    Outer {
        outer: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("root of v(tau) = eta not bracketed after {attempts} expansions (tau = {tau:.3e}, v = {value:.3e}, eta = {eta:.3e})")]
    NotBracketed {
        attempts: usize,
        tau: f64,
        value: f64,
        eta: f64,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("report error: {0}")]
    Report(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
