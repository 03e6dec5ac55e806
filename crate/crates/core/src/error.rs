use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MimlError {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("label index {index} out of range for {n_labels} labels")]
    LabelOutOfRange { index: usize, n_labels: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("model format error: {0}")]
    ModelFormat(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("problem is infeasible: {0}")]
    Infeasible(String),

    #[error("problem is unbounded: {0}")]
    Unbounded(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl MimlError {
    /// True for failures of the numerical machinery rather than of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            MimlError::Infeasible(_) | MimlError::Unbounded(_) | MimlError::Numerical(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, MimlError>;
