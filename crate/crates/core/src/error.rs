use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point {point:?} lies outside the domain of metric `{metric}`")]
    OutsideDomain { metric: String, point: Vec<f64> },

    #[error("requested jet order {requested} exceeds engine maximum {max}")]
    OrderTooHigh { requested: usize, max: usize },

    #[error("metric matrix is singular at {point:?} (|det| = {det:e})")]
    SingularMetric { point: Vec<f64>, det: f64 },

    #[error("metric matrix is not symmetric at {point:?}")]
    AsymmetricMetric { point: Vec<f64> },

    #[error("signature mismatch: expected {expected:?}, found {found:?}")]
    SignatureMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("tensor field carries order {available} but {required} more derivatives were requested")]
    InsufficientOrder { available: usize, required: usize },

    #[error("Gram-Schmidt breakdown: no non-null pivot left after pivot search; supply a seed frame")]
    GramSchmidtBreakdown,

    #[error("level mismatch: {0} vs {1}")]
    LevelMismatch(usize, usize),

    #[error("one model vanishes at every level while the other does not; no scaling exists")]
    NoScaling,

    #[error("f_yyy vanishes at {point:?}; use the quadratic-branch normalization")]
    VanishingThirdDerivative { point: Vec<f64> },

    #[error("f_yy vanishes at {point:?} (flat direction)")]
    VanishingSecondDerivative { point: Vec<f64> },

    #[error("division by zero: {0}")]
    DivisionByZero(String),

    #[error("Q-structure metric degenerate at {point:?}: g_N(theta, theta) = {theta_norm} (must differ from 1)")]
    DegenerateQStructure { point: Vec<f64>, theta_norm: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("1-form is not Killing (max |theta_(a;b) + theta_(b;a)| = {residual:e})")]
    NotKilling { residual: f64 },

    #[error("dual vector field too long: |xi|^2 = {norm_sq} (must be < 1)")]
    XiTooLong { norm_sq: f64 },

    #[error("invariant `{name}` vanishes at {point:?}; level function undefined")]
    VanishingInvariant { name: String, point: Vec<f64> },

    #[error("geodesic left the domain after arc length {arc_length}")]
    DomainExit { arc_length: f64 },

    #[error("level set mu = {level} not reached within the chart")]
    LevelNotReached { level: f64 },

    #[error("derivative vanishes at x = {x}; ratio test degenerates")]
    VanishingDerivative { x: f64 },

    #[error("quadrature tolerance not met at x = {x} (estimate {estimate:e})")]
    QuadratureFailed { x: f64, estimate: f64 },

    #[error("nonpositive diagonal entry {value} at position {index}")]
    NonPositiveDiagonal { index: usize, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
