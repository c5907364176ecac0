use thiserror::Error;

pub type Result<T> = std::result::Result<T, RemError>;

#[derive(Debug, Error)]
pub enum RemError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("quantile grids differ in size ({left} vs {right})")]
    GridMismatch { left: usize, right: usize },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("query has dimension {found}, model expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("insufficient local data at z = {z}: sigma0^2 = {sigma0_sq:e}")]
    InsufficientLocalData { z: f64, sigma0_sq: f64 },

    #[error("unit with {size} observation(s) is infeasible for kernel density estimation")]
    InfeasibleUnit { size: usize },

    #[error("every unit is infeasible for kernel density estimation")]
    AllUnitsInfeasible,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{failed} of {total} runs failed (first failure: {first})")]
    TooManyFailures {
        failed: usize,
        total: usize,
        first: String,
    },

    #[error("{file} row {row}: {message}")]
    Ingest {
        file: &'static str,
        row: u64,
        message: String,
    },

    #[error("{0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl RemError {
    /// Stable machine-readable identifier for the error kind.
    pub fn code(&self) -> &'static str {
        match self {
            RemError::InvalidArgument(_) => "invalid_argument",
            RemError::GridMismatch { .. } => "grid_mismatch",
            RemError::LengthMismatch { .. } => "length_mismatch",
            RemError::DimensionMismatch { .. } => "dimension_mismatch",
            RemError::DegenerateDesign(_) => "degenerate_design",
            RemError::InsufficientLocalData { .. } => "insufficient_local_data",
            RemError::InfeasibleUnit { .. } => "infeasible_unit",
            RemError::AllUnitsInfeasible => "all_units_infeasible",
            RemError::InvalidParameter(_) => "invalid_parameter",
            RemError::TooManyFailures { .. } => "too_many_failures",
            RemError::Ingest { .. } => "ingest",
            RemError::Parse(_) => "parse",
            RemError::Io(_) => "io",
            RemError::Json(_) => "json",
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> RemError {
    RemError::InvalidArgument(msg.into())
}
