use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("dimension mismatch: {left_width}x{left_height} vs {right_width}x{right_height}")]
    DimensionMismatch {
        left_width: usize,
        left_height: usize,
        right_width: usize,
        right_height: usize,
    },

    #[error("unknown shape `{0}`")]
    UnknownShape(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("plan distance {distance} exceeds horizon {horizon}")]
    Infeasible { distance: u32, horizon: u32 },

    #[error("generation failed: requested {requested}, achieved {achieved}")]
    Generation { requested: usize, achieved: usize },

    #[error("replay diverged at step {step}: {detail}")]
    ReplayMismatch { step: usize, detail: String },

    #[error("agent error: {0}")]
    Agent(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
