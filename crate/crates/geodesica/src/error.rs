//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A derivative or function evaluation produced a non-finite value.
    #[error("numerical fault in {context}: non-finite value at indices {indices:?}")]
    NumericalFault {
        context: &'static str,
        indices: Vec<usize>,
    },

    /// The induced metric is singular: the immersion condition fails here.
    #[error("degenerate metric at {point:?}")]
    DegenerateMetric { point: Vec<f64> },

    /// A geodesic trajectory left the manifold bounds.
    #[error("trajectory escaped domain at lambda = {exit_lambda}")]
    TrajectoryEscapedDomain { exit_lambda: f64 },

    /// A straight coordinate segment left the manifold bounds.
    #[error("segment escaped domain at t = {t}")]
    SegmentEscapedDomain { t: f64 },

    /// Pair too close to the diagonal: the pullback distance gradient is
    /// undefined at p = q.
    #[error("sample pair within {epsilon} of the diagonal")]
    DiagonalSample { epsilon: f64 },

    #[error("point {point:?} outside manifold bounds")]
    OutOfBounds { point: Vec<f64> },

    /// Scalar curvature vanishes everywhere probed; curvature-based
    /// sampling has no target density.
    #[error("manifold is flat: |R| < {threshold} at all probes")]
    FlatManifold { threshold: f64 },

    /// Gradient-flow integration stopped making progress.
    #[error("gradient flow stalled at {point:?} (step {step})")]
    StalledFlow { point: Vec<f64>, step: usize },

    /// Training loss became non-finite. Carries the last finite state so
    /// callers can checkpoint it.
    #[error("non-finite loss at update {update}")]
    NonFiniteLoss {
        update: usize,
        last_good: Box<crate::eikonal::TrainOutput>,
    },

    #[error("i/o fault on {path}: {source}")]
    IoFault {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// A serialized artifact does not match the expected format.
    #[error("schema mismatch: {detail}")]
    SchemaMismatch { detail: String },

    /// Checkpoint was produced for a different manifold or bounds.
    #[error("manifold mismatch: checkpoint has {found}, requested {requested}")]
    ManifoldMismatch { found: String, requested: String },

    #[error("invalid configuration: {detail}")]
    InvalidConfig { detail: String },

    #[error("invalid argument: {detail}")]
    InvalidArgument { detail: String },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::IoFault {
            path: path.into(),
            source,
        }
    }

    pub fn schema(detail: impl Into<String>) -> Self {
        Error::SchemaMismatch {
            detail: detail.into(),
        }
    }

    pub fn config(detail: impl Into<String>) -> Self {
        Error::InvalidConfig {
            detail: detail.into(),
        }
    }

    pub fn argument(detail: impl Into<String>) -> Self {
        Error::InvalidArgument {
            detail: detail.into(),
        }
    }
}
