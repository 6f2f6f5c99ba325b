use thiserror::Error;

/// Errors raised by the verification pipelines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("odd dimension {0} is not supported here")]
    OddDimension(usize),
    #[error("supertrace needs an oriented orthonormal frame")]
    NonOrthonormalFrame,
    #[error("invalid metric: {0}")]
    InvalidMetric(String),
    #[error("form has a component of odd degree {0}")]
    OddDegree(usize),
    #[error("curvature matrix is not antisymmetric (residual {0:e})")]
    NotAntisymmetric(f64),
    #[error("form has a nonzero degree-0 part; nilpotent series do not terminate")]
    NotNilpotent,
    #[error("coefficient shape mismatch: {0} vs {1}")]
    ShapeMismatch(usize, usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("chart radius {radius} exceeds injectivity radius {limit}")]
    RadiusTooLarge { radius: f64, limit: f64 },
    #[error("point lies outside the chart")]
    OutsideChart,
    #[error("time must be positive, got {0}")]
    NonPositiveTime(f64),
    #[error("matrix size {size} exceeds cap {cap}")]
    SizeCapExceeded { size: usize, cap: usize },
    #[error("matrix is not Hermitian (relative residual {0:e})")]
    NotHermitian(f64),
    #[error("ill-conditioned fit (condition number {0:e})")]
    IllConditioned(f64),
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("fit residual {residual:e} above tolerance {tolerance:e}")]
    FitResidual { residual: f64, tolerance: f64 },
    #[error("ambiguous spectral gap between {below:e} and {above:e}")]
    AmbiguousGap { below: f64, above: f64 },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
