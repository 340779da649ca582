use thiserror::Error;

/// Errors raised anywhere in the test pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid design density: {0}")]
    InvalidDensity(String),

    #[error("invalid design grid: {0}")]
    InvalidGrid(String),

    #[error("invalid sample: {0}")]
    InvalidSample(String),

    #[error("invalid difference sequence: {0}")]
    InvalidSequence(String),

    #[error("insufficient data: need at least {required} observations, got {available}")]
    InsufficientData { required: usize, available: usize },

    #[error("bandwidth too small: empty or degenerate kernel window at design point {index}")]
    BandwidthTooSmall { index: usize },

    #[error("no candidate bandwidth yields valid leave-one-out fits")]
    NoValidBandwidth,

    #[error("degenerate variance: all smoothed fourth-power residuals are zero")]
    DegenerateVariance,

    #[error("collinear basis: Gram matrix condition number {condition:e} exceeds limit")]
    CollinearBasis { condition: f64 },

    #[error(
        "parameter fit failed after {iterations} iterations: {reason} (objective trace: {trace:?})"
    )]
    FitFailure {
        iterations: usize,
        reason: String,
        trace: Vec<f64>,
    },

    #[error("singular H matrix at t = {t} (condition number {condition:e}); lower t0")]
    SingularH { t: f64, condition: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("unknown variance family component: {0}")]
    UnknownFamily(String),

    #[error("simulation harness: {failed} of {total} replications failed (first error: {first})")]
    Harness {
        failed: usize,
        total: usize,
        first: String,
    },
}

pub type Result<V> = std::result::Result<V, Error>;
