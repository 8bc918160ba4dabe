use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum MmclError {
    /// A configuration value is invalid. `field` is the dotted path of the offending key.
    #[error("configuration error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    /// Input could not be parsed. `record` is the 1-based data record index (header excluded).
    #[error("parse error at record {record}: {message}")]
    Parse { record: usize, message: String },

    /// A sentiment label outside [-3, 3]. `record` is 1-based.
    #[error("validation error at record {record}: label {label} outside [-3, 3]")]
    LabelOutOfRange { record: usize, label: f64 },

    #[error("numerical error: {0}")]
    Numerical(String),

    /// The input is well formed but the requested quantity is undefined on it.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Training produced a non-finite total loss.
    #[error("training diverged at step {step}: {message}")]
    Diverged { step: usize, message: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl MmclError {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        MmclError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn validation(message: impl Into<String>) -> Self {
        MmclError::Validation(message.into())
    }
}

pub type Result<T> = std::result::Result<T, MmclError>;
