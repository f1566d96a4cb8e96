use thiserror::Error;

/// Errors raised by environment construction, risk evaluation and the solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parameter {name} = {value} is outside its domain {domain}")]
    Domain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("invalid outcome space: {0}")]
    Space(String),

    #[error("environment construction failed: {0}")]
    Construction(String),

    #[error("validation failed for {entry}: {reason}")]
    Validation { entry: String, reason: String },

    #[error("malformed environment file: {0}")]
    Parse(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("outcome spaces do not match")]
    SpaceMismatch,

    #[error("label {0} is not in {{-1, +1}}; logistic loss is undefined")]
    NonBinaryLabel(f64),

    #[error("conditional mean {mean} is separable under logistic loss; no finite minimizer")]
    Separable { mean: f64 },

    #[error("alpha = 0.5 makes the invariant coefficient vanish")]
    Degenerate,

    #[error("restriction {restriction} is not available: {reason}")]
    Restriction {
        restriction: &'static str,
        reason: String,
    },

    #[error("no invariant predictor exists for the given environments")]
    NoInvariantPredictor,

    #[error("no scalar-invariant predictor was found")]
    NoScalarInvariantPredictor,

    #[error("no stationary point of the penalized objective was found")]
    NoStationaryPoint,

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}
