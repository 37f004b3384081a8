use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("zero polynomial")]
    ZeroPolynomial,
    #[error("polynomial has a linear term (a_1 = {0})")]
    LinearTerm(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("scale too fine for grid")]
    ScaleTooFine,
    #[error("range too narrow")]
    RangeTooNarrow,
    #[error("A too small")]
    ATooSmall,
    #[error("resolution too coarse: {0}")]
    ResolutionTooCoarse(String),
    #[error("no stationary point")]
    NoStationaryPoint,
    #[error("non-unique stationary point: {0:?}")]
    NonUnique(Vec<f64>),
    #[error("not smooth enough at this degree")]
    NotSmooth,
    #[error("critical point")]
    CriticalPoint,
    #[error("node budget exceeded: {required} nodes required, budget {budget}")]
    NodeBudget { required: usize, budget: usize },
    #[error("derivative floor violated: {0}")]
    DerivativeFloor(String),
    #[error("pair conditions failed: {0}")]
    PairConditions(String),
    #[error("Hölder relation violated")]
    HolderViolated,
    #[error("value outside range")]
    OutOfRange,
    #[error("empty input: {0}")]
    Empty(String),
    #[error("unbounded set")]
    Unbounded,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
