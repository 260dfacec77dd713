use thiserror::Error;

/// Errors produced by the optimizers, schedules and the experiment harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("degenerate schedule: cosine denominator {denominator} <= 0 at step {step} (phi = {phi})")]
    DegenerateSchedule { step: u64, phi: f64, denominator: f64 },

    #[error("step {step} outside schedule range [1, {t3}]")]
    StepOutOfRange { step: u64, t3: u64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite loss ({which} = {value})")]
    NonFiniteLoss { which: &'static str, value: f64 },

    #[error("objective `{0}` provides no analytic gradient")]
    GradientUnavailable(String),

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("runs do not share the same objective and initial point: {0}")]
    MismatchedObjective(String),

    #[error("grid search has no valid points")]
    EmptyGrid,

    #[error("loss callback failed: {0}")]
    CallbackRaised(String),

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
