use thiserror::Error;

/// Errors raised while building or evaluating risk-measure objects.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("probability space must have at least one state")]
    EmptySpace,
    #[error("state {state} has non-positive probability {prob}")]
    NonPositiveProb { state: usize, prob: f64 },
    #[error("probabilities sum to {sum}, expected 1")]
    ProbSumMismatch { sum: f64 },
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("objects live on different probability spaces")]
    SpaceMismatch,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("random element is not measurable w.r.t. the {0} algebra")]
    NotMeasurable(&'static str),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("value {value} is outside the range of the map")]
    OutOfRange { value: f64 },
    #[error("affine scale must be strictly positive at every state")]
    NonPositiveAlpha,
    #[error("algebra mismatch: {0}")]
    AlgebraMismatch(String),
    #[error("random vector is not independent of the conditioning algebra")]
    NotIndependent,
    #[error("degenerate affine fit: {0}")]
    DegenerateFit(String),
    #[error("risk measure is not normalized on constants (residual {residual:e})")]
    NotNormalized { residual: f64 },
    #[error("state space of size {size} exceeds the cap {cap}")]
    SizeOverflow { size: usize, cap: usize },
    #[error("algebra list is not increasing at position {0}")]
    NotAFiltration(usize),
    #[error("diagonal range of level {later} is not contained in that of level {earlier}")]
    RangeNotNested { earlier: usize, later: usize },
    #[error("relation is not affine (residual {residual:e})")]
    NonAffineRelation { residual: f64 },
    #[error("affine offsets violate the martingale property (residual {residual:e})")]
    MartingaleViolation { residual: f64 },
    #[error("invalid utility: {0}")]
    InvalidUtility(String),
    #[error("invalid outer map: {0}")]
    InvalidOuter(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
