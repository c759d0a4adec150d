use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point {point:?} lies outside the chart domain")]
    OutsideDomain { point: Vec<f64> },

    #[error("metric is numerically degenerate at {point:?} (|det g| = {det:e})")]
    DegenerateMetric { point: Vec<f64>, det: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("{0}")]
    UnsupportedDimension(String),

    #[error("field evaluation failed at {point:?}: {reason}")]
    FieldEvaluation { point: Vec<f64>, reason: String },

    #[error("expression error: {0}")]
    Expr(String),

    #[error("field is critical (|grad f| < {eps_grad:e}) on effectively the whole domain; rejection rate {rejection_rate:.3}")]
    EverywhereCritical { eps_grad: f64, rejection_rate: f64 },

    #[error("empty sample cloud")]
    EmptyCloud,

    #[error("level {level} produced an empty fiber in the chart box")]
    EmptyFiber { level: f64 },

    #[error("degenerate tangent plane: u and v are parallel within tolerance")]
    DegeneratePlane,

    #[error("level interval [{lo}, {hi}] contains a critical value of the profile")]
    CriticalInInterval { lo: f64, hi: f64 },

    #[error("profile table does not cover the requested range [{lo}, {hi}]")]
    ProfileRange { lo: f64, hi: f64 },

    #[error("generator set is not closed under brackets: [X{i}, X{j}] leaves the span (residual {residual:e})")]
    NotClosed { i: usize, j: usize, residual: f64 },

    #[error("subalgebra not recognized against the invariant catalog: {0}")]
    UnsupportedSubalgebra(String),

    #[error("generic rank {got} differs from the required {expected} (held at {fraction:.1}% of sample points)")]
    GenericRank { expected: usize, got: usize, fraction: f64 },

    #[error("trace is not monotone near the base point; cannot invert")]
    NonMonotoneTrace,

    #[error("trace ranges do not overlap; cannot compose reparameterization")]
    RangeMismatch,

    #[error("polytrope density never reaches zero before xi = {xi_max} (unbounded support, e.g. m = 5, q = 2)")]
    UnboundedSupport { xi_max: f64 },

    #[error("grid too coarse to resolve the fluid body: cell {cell:e} vs boundary radius {r_b:e}")]
    ResolutionTooCoarse { cell: f64, r_b: f64 },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("ODE step size underflow at t = {t}")]
    StepUnderflow { t: f64 },

    #[error("insufficient sampling: need at least {needed} samples per bin, got {got}")]
    InsufficientSampling { needed: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
