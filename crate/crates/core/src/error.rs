use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point {0:?} lies outside the chart domain")]
    Domain(Vec<f64>),

    #[error("singular metric at {0:?}")]
    SingularMetric(Vec<f64>),

    #[error("degenerate boundary: |grad x| = {norm:e} below tolerance at {point:?}")]
    DegenerateBoundary { point: Vec<f64>, norm: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraceError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),

    #[error("perturbed ray left the reflection stratum (target hit {k_target}); request a smaller step")]
    StratumBoundary { k_target: usize },

    #[error("ray never reached boundary arrival {k_target}")]
    MissingArrival { k_target: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObserveError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),

    #[error(transparent)]
    Trace(#[from] TraceError),

    #[error("insufficient sampling: {found} points within radius, need {needed}")]
    InsufficientSampling { found: usize, needed: usize },

    #[error("patch tangent is not spacelike (Gram determinant {0:e})")]
    NonSpacelike(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReconstructError {
    #[error(transparent)]
    Observe(#[from] ObserveError),

    #[error(transparent)]
    Trace(#[from] TraceError),

    #[error("chart construction failed: best condition number {best_condition:e}")]
    ChartFailure { best_condition: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("conformal fit failed: {0}")]
    FitFailure(String),

    #[error("orientation tracking lost continuity at path index {0}")]
    Tracking(usize),

    #[error("no clean intersection: miss distance {miss:e} exceeds {tolerance:e}")]
    NoCleanIntersection { miss: f64, tolerance: f64 },

    #[error("unknown set id {0}")]
    UnknownId(u64),
}

impl From<GeometryError> for ReconstructError {
    fn from(e: GeometryError) -> Self {
        ReconstructError::Observe(ObserveError::Geometry(e))
    }
}
