use thiserror::Error;

use crate::classic::Method;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdditivityError {
    #[error("dimension too small: need at least 2 rows and 2 columns, got {rows}x{cols}")]
    DimensionTooSmall { rows: usize, cols: usize },

    #[error("cell ({row}, {col}) is not a finite number")]
    NonFinite { row: usize, col: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate spectrum: all residuals are zero, omnibus statistics are undefined")]
    DegenerateSpectrum,

    #[error("insufficient degrees of freedom for {method}: {detail}")]
    InsufficientDf { method: Method, detail: String },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("division guard: {0} fell below 1e-12")]
    DivisionGuard(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("calibration mismatch: {0}")]
    CalibrationMismatch(String),

    #[error("resampling degeneracy: {degenerate} of {total} synthetic datasets were degenerate")]
    ResamplingDegeneracy { degenerate: usize, total: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("cache corruption: {0}")]
    CacheCollision(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for AdditivityError {
    fn from(e: std::io::Error) -> Self {
        AdditivityError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, AdditivityError>;
