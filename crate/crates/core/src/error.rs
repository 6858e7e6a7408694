use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("level {level} is outside 0..={max}")]
    LevelOutOfRange { level: usize, max: usize },

    #[error("leaf {leaf} is outside a window of {size} leaves")]
    LeafOutOfRange { leaf: usize, size: usize },

    #[error("invalid `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("window at level {level} has more leaves than can be addressed")]
    WindowTooLarge { level: usize },

    #[error("truncation infeasible: {0}")]
    TruncationInfeasible(String),

    #[error("characteristic function not integrable: {0}")]
    NotIntegrable(String),

    #[error("empty input: {0}")]
    Empty(&'static str),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures that come from numerical feasibility rather than
    /// malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::TruncationInfeasible(_) | Error::NotIntegrable(_) | Error::WindowTooLarge { .. }
        )
    }
}
