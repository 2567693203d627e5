use thiserror::Error;

/// Errors raised by density construction, fitting, propagation and file I/O.
#[derive(Debug, Error)]
pub enum SnpError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("polynomial order {order} is invalid: {reason}")]
    InvalidOrder { order: usize, reason: &'static str },

    #[error("dimension must be at least 1")]
    InvalidDimension,

    #[error("density has no whitening transform")]
    MissingWhitening,

    #[error("marginal keep set is empty")]
    EmptyKeep,

    #[error("coordinate {index} out of range for dimension {dimension}")]
    CoordinateOutOfRange { index: usize, dimension: usize },

    #[error("duplicate coordinate {0} in selection")]
    DuplicateCoordinate(usize),

    #[error("inverted bounds on axis {axis}: lower {lower} > upper {upper}")]
    InvertedBounds { axis: usize, lower: f64, upper: f64 },

    #[error("unsupported geometry: {0}")]
    UnsupportedGeometry(String),

    #[error("degenerate ensemble: {0}")]
    DegenerateEnsemble(String),

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("invalid covariance: {0}")]
    InvalidCovariance(String),

    #[error("sample {sample} lies in the singular set of the polynomial (|P| = {value:e})")]
    SingularGradient { sample: usize, value: f64 },

    #[error("non-finite objective encountered at iteration {iteration}")]
    NonFiniteObjective { iteration: usize },

    #[error("{branch} branch is infeasible: {reason}")]
    InfeasibleBranch {
        branch: &'static str,
        reason: String,
    },

    #[error("integration diverged at t = {time} (point {point:?})")]
    Divergence { time: f64, point: Option<usize> },

    #[error("{count} ensemble point(s) diverged; first at index {first_index}, t = {first_time}")]
    EnsembleDivergence {
        count: usize,
        first_index: usize,
        first_time: f64,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("normalization mismatch: file has {file}, recomputed {recomputed}")]
    NormalizationMismatch { file: f64, recomputed: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("usage: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SnpError>;
