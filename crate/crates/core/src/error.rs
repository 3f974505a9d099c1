use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid-parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid-argument: {0}")]
    InvalidArgument(String),
    #[error("invalid-field: {0}")]
    InvalidField(String),
    #[error("invalid-density: {0}")]
    InvalidDensity(String),
    #[error("invalid-input: {0}")]
    InvalidInput(String),
    #[error("integration-escape at t = {t}")]
    IntegrationEscape { t: f64, last: Vec<f64> },
    #[error("tangency-error: |X·n| = {normal_speed:e} at t = {t}")]
    Tangency { t: f64, normal_speed: f64 },
    #[error("not-a-fixed-point: return defect {defect:e}")]
    NotAFixedPoint { defect: f64 },
    #[error("hyperbolicity-required")]
    HyperbolicityRequired,
    #[error("escape-before-return at t = {t}")]
    EscapeBeforeReturn { t: f64 },
    #[error("unsupported-order: {0} (max 4)")]
    UnsupportedOrder(usize),
    #[error("invalid-endpoints: {0}")]
    InvalidEndpoints(String),
    #[error("no-circle: distance {distance} >= 2·delta = {diameter}")]
    NoCircle { distance: f64, diameter: f64 },
    #[error("angle-budget-exceeded: need {needed}, budget {budget}")]
    AngleBudgetExceeded { needed: f64, budget: f64 },
    #[error("patch-collision: {0}")]
    PatchCollision(String),
    #[error("oracle-failure: {0}")]
    OracleFailure(String),
    #[error("invalid-radii: {0}")]
    InvalidRadii(String),
    #[error("density-failure: no recurrent point within {radius} of {location:?}")]
    DensityFailure { location: Vec<f64>, radius: f64 },
    #[error("hop {hop}: {source}")]
    Hop { hop: usize, source: Box<Error> },
    #[error("requires-verified-input")]
    RequiresVerifiedInput,
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::InvalidInput(e.to_string())
    }
}
