use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("boundary data unavailable: {0}")]
    BoundaryData(String),
    #[error("singular metric at point {index}: det = {det:e}")]
    SingularMetric { index: usize, det: f64 },
    #[error("pinching parameter eps = {0} is outside the small-eps regime (must be < 0.05)")]
    OutOfRegime(f64),
    #[error("domain reduction did not terminate within {0} steps")]
    ReductionFailure(usize),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("admissibility lost at t = {t}: min relative eigenvalue {min_eig:e}")]
    AdmissibilityLost { t: f64, min_eig: f64 },
    #[error("step failure: {0}")]
    StepFailure(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, Error>;
