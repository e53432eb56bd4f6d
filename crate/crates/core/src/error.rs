use thiserror::Error;

use crate::diagnostics::DiagRecord;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("index out of range: {0}")]
    Index(String),

    /// A caller broke an operation's precondition.
    #[error("contract violated: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("unknown preset `{0}`")]
    Registry(String),

    /// Training produced non-finite values. The snapshot, when present, describes
    /// the network state at the step that failed.
    #[error("numerical explosion: {reason}")]
    Explosion {
        reason: String,
        snapshot: Option<Box<DiagRecord>>,
    },

    #[error("data format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        Error::Dimension { op, left, right }
    }

    pub fn is_explosion(&self) -> bool {
        matches!(self, Error::Explosion { .. })
    }
}
