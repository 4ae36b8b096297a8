use thiserror::Error;

/// Errors produced by the modeling and inversion kernels.
#[derive(Debug, Error)]
pub enum EfwiError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("grid too small: need at least {need} nodes per axis, got {got}")]
    GridTooSmall { need: usize, got: usize },

    #[error("invalid grid spacing: dz and dx must be positive")]
    InvalidSpacing,

    #[error("non-physical model: {0}")]
    NonPhysicalModel(String),

    #[error("non-finite value in field `{0}`")]
    NonFinite(String),

    #[error("unit mismatch: expected {expected}, got {got}")]
    UnitMismatch { expected: String, got: String },

    #[error("position ({z}, {x}) lies outside the grid")]
    OutsideGrid { z: f64, x: f64 },

    #[error("receivers {0} and {1} map to the same grid node")]
    DuplicateReceiverNode(usize, usize),

    #[error("singular matrix at frequency {freq_hz} Hz: {detail}")]
    SingularMatrix { freq_hz: f64, detail: String },

    #[error("dense oracle limited to 5000 unknowns, got {0}")]
    OracleTooLarge(usize),

    #[error("unsupported parameterization {0} for this operation")]
    UnsupportedParameterization(String),

    #[error("invalid boundary specification: {0}")]
    InvalidBoundary(String),

    #[error("empty constraint set: {0}")]
    EmptyConstraintSet(String),

    #[error("sketch size q={q} exceeds source count n_s={ns}")]
    SketchTooLarge { q: usize, ns: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("line search stalled: {0}")]
    LineSearchStall(String),

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("malformed grid file: {0}")]
    MalformedGridFile(String),

    #[error("malformed manifest: {0}")]
    MalformedManifest(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EfwiError>;
