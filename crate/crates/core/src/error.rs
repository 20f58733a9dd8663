use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index {index} out of range for dimension {n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("index {0} is listed as both nonnegative and nonpositive")]
    OverlappingSets(usize),

    #[error("sparsity level {s} out of range 1..={n}")]
    SparsityOutOfRange { s: usize, n: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("column {0} is zero")]
    ZeroColumn(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),

    #[error("malformed linear program: {0}")]
    MalformedProgram(String),

    /// The solver did not converge or produced an unverifiable point. Distinct
    /// from an infeasible program: no claim may be derived from it.
    #[error("numerical failure in {stage}: {detail}")]
    Numerical { stage: String, detail: String },

    #[error("size guard: {0}")]
    SizeGuard(String),

    #[error("certificate failed re-validation: {0}")]
    Revalidation(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn numerical(stage: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Numerical {
            stage: stage.into(),
            detail: detail.into(),
        }
    }

    /// Re-annotates a numerical failure with the stage that triggered it.
    pub fn in_stage(self, stage: &str) -> Self {
        match self {
            Error::Numerical { stage: inner, detail } => Error::Numerical {
                stage: format!("{stage}/{inner}"),
                detail,
            },
            other => other,
        }
    }
}
