use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("matrix is not symmetric (max asymmetry {max_asymmetry:e})")]
    NotSymmetric { max_asymmetry: f64 },

    #[error("covariance is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("Gram column {column}: {reason}")]
    ColumnSource { column: usize, reason: String },

    #[error("output independent of all inputs at this sample size (HSIC(X,Y) = {value:e} <= {threshold:e})")]
    NoDependence { value: f64, threshold: f64 },

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("integration exceeded {max_steps} steps at t = {t}")]
    TooManySteps { t: f64, max_steps: usize },

    #[error("time grids differ")]
    GridMismatch,

    #[error("singular normal matrix (condition estimate {condition:e})")]
    SingularNormalMatrix { condition: f64 },

    #[error("fit did not converge")]
    NotConverged,

    #[error("zero output variance")]
    ZeroVariance,
}
