use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty data: {0}")]
    EmptyData(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("learner failed while fitting the model without feature {feature}: {source}")]
    Learner {
        feature: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("csv has no header row")]
    MissingHeader,

    #[error("line {line}, column '{column}': cannot parse '{value}' as a finite number")]
    NonNumericCell {
        line: usize,
        column: String,
        value: String,
    },

    #[error("target column '{0}' not found in header")]
    MissingTarget(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

/// Checks that a slice has the expected length.
pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

pub(crate) fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("{what}[{pos}] = {}", values[pos])));
    }
    Ok(())
}
