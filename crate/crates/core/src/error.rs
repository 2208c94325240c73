use thiserror::Error;

/// Errors raised by the geometry, surface and measurement layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LoomError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("point lies outside the open Bruhat cell (top-left entry {0:e})")]
    OutsideBruhatCell(f64),
    #[error("empty surface specification")]
    EmptySpec,
    #[error("half-plane closures {0} and {1} intersect")]
    Overlap(usize, usize),
    #[error("entries {0} and {1} are not strictly increasing in s")]
    NotIncreasing(usize, usize),
    #[error("start point lies inside excised half-plane {0}")]
    StartInsideHalfPlane(usize),
    #[error("tangent runs along boundary geodesic {0}")]
    DegenerateTrace(usize),
    #[error("index {0} is outside the surface prefix of length {1}")]
    IndexOutOfRange(usize, usize),
    #[error("weaving pattern is not strictly increasing: {0:?}")]
    PatternNotIncreasing(Vec<usize>),
    #[error("developed geodesic crosses boundary {found} where {expected:?} was expected")]
    UnexpectedCrossing { found: usize, expected: Option<usize> },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("zero occupation time in the window; increase T")]
    ZeroOccupation,
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, LoomError>;

impl LoomError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            LoomError::Domain(_) => "DOMAIN",
            LoomError::OutsideBruhatCell(_) => "OUTSIDE_BRUHAT_CELL",
            LoomError::EmptySpec => "EMPTY_SPEC",
            LoomError::Overlap(..) => "OVERLAP",
            LoomError::NotIncreasing(..) => "NOT_INCREASING",
            LoomError::StartInsideHalfPlane(_) => "START_INSIDE_HALF_PLANE",
            LoomError::DegenerateTrace(_) => "DEGENERATE_TRACE",
            LoomError::IndexOutOfRange(..) => "INDEX_OUT_OF_RANGE",
            LoomError::PatternNotIncreasing(_) => "PATTERN_NOT_INCREASING",
            LoomError::UnexpectedCrossing { .. } => "UNEXPECTED_CROSSING",
            LoomError::Precondition(_) => "PRECONDITION",
            LoomError::ZeroOccupation => "ZERO_OCCUPATION",
            LoomError::Parse(_) => "PARSE",
        }
    }

    /// Whether the error is a surface validation failure rather than bad input.
    pub fn is_validation(&self) -> bool {
        matches!(self, LoomError::EmptySpec | LoomError::Overlap(..) | LoomError::NotIncreasing(..))
    }
}
