use thiserror::Error;

/// Errors surfaced by the library. Exit codes: 2 usage, 3 data/format,
/// 4 numerical.
#[derive(Debug, Error)]
pub enum DasError {
    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("format error at offset {offset}: {msg}")]
    Format { msg: String, offset: u64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("singular matrix: smallest pivot {pivot:.3e} ({context})")]
    Singular { pivot: f64, context: String },

    #[error("training diverged: non-finite loss at step {step}")]
    Diverged { step: usize },

    #[error("index {index} out of range (len {len})")]
    Index { index: usize, len: usize },

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("capacity error: {0}")]
    Capacity(String),
}

impl DasError {
    pub fn exit_code(&self) -> i32 {
        match self {
            DasError::Parameter(_) | DasError::Config(_) => 2,
            DasError::Format { .. } | DasError::Io(_) | DasError::Index { .. } => 3,
            DasError::Singular { .. }
            | DasError::Diverged { .. }
            | DasError::UndefinedCorrelation(_)
            | DasError::Capacity(_)
            | DasError::Shape(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, DasError>;
