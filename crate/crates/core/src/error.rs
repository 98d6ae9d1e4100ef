use thiserror::Error;

/// Errors raised by the computational modules.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("operands belong to different group families ({0})")]
    FamilyMismatch(String),
    #[error("enumeration needs {needed}+ elements but the cap is {cap}")]
    CapExceeded { needed: usize, cap: usize },
    #[error("support size {size} exceeds the cap {cap}; try a larger prune_eps")]
    SupportCap { size: usize, cap: usize },
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("spectral radius of an amenable family is 1; acknowledge to proceed")]
    AmenableSpectralRadius,
    #[error("spectral estimate {0} is not below 1")]
    SpectralRadiusNotBelowOne(f64),
    #[error("did not converge: {0}")]
    NoConvergence(String),
    #[error("kernel sequence is not Cauchy after {} terms", .observed.len())]
    NotCauchy { observed: Vec<f64> },
    #[error("inconsistent truncation: upper {upper} < lower {lower}")]
    InconsistentTruncation { lower: f64, upper: f64 },
    #[error("infinite Ancona constant: {0}")]
    InfiniteAnconaConstant(String),
    #[error("chain incompatibility: {0}")]
    ChainIncompatible(String),
    #[error("not a geodesic: {0}")]
    NotGeodesic(String),
    #[error("degenerate operator: {0}")]
    DegenerateOperator(String),
    #[error("index sets differ ({0} vs {1})")]
    IndexMismatch(usize, usize),
    #[error("norms differ: {0} vs {1}")]
    NormMismatch(f64, f64),
    #[error("insufficient depth: {0}")]
    InsufficientDepth(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("density check failed: discrepancy {discrepancy} above threshold {threshold}")]
    DensityCheck { discrepancy: f64, threshold: f64 },
    #[error("missing component measure: {0}")]
    MissingComponent(String),
    #[error("at grid point {coords:?}: {source}")]
    AtGridPoint { coords: Vec<f64>, source: Box<Error> },
}

pub type Result<T> = std::result::Result<T, Error>;
