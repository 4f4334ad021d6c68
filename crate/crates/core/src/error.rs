use std::fmt;

use thiserror::Error;

/// A single violated invariant, tagged with the offending field.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
}

impl Violation {
    pub fn new(field: &'static str, message: impl Into<String>) -> Self {
        Self {
            field,
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum Error {
    #[error("invalid stage specification: {}", join(.0))]
    InvalidSpec(Vec<Violation>),

    #[error("{name} = {value} is outside its domain ({expected})")]
    Domain {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("polarity mismatch: {0}")]
    Polarity(String),

    #[error("zero ripple budget for {0}")]
    ZeroRippleBudget(&'static str),

    #[error("unknown configuration {0}")]
    UnknownConfiguration(usize),

    #[error("state has {got} entries, circuit expects {expected}")]
    StateDimension { expected: usize, got: usize },

    #[error("invalid simulation config: {0}")]
    InvalidSimConfig(String),

    #[error("unknown signal `{0}`")]
    UnknownSignal(String),

    #[error("simulation diverged at t = {time:e} s (non-finite state)")]
    Diverged { time: f64 },

    #[error("empty signal")]
    EmptySignal,

    #[error("signal length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("signal `{0}` has zero RMS")]
    ZeroRms(&'static str),

    #[error("stage {stage}: {error}")]
    InStage { stage: usize, error: Box<Error> },

    #[error("cascade must contain at least one stage")]
    EmptyCascade,

    #[error(
        "chain mismatch at stage {stage}: source {source_voltage} V does not match previous output |{previous_output}| V"
    )]
    ChainMismatch {
        stage: usize,
        source_voltage: f64,
        previous_output: f64,
    },
}

fn join(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;

/// Checks `value` lies in the open interval `(0, 1)`.
pub(crate) fn unit_open(name: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value < 1.0 {
        Ok(value)
    } else {
        Err(Error::Domain {
            name,
            value,
            expected: "0 < x < 1",
        })
    }
}

pub(crate) fn positive(name: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Domain {
            name,
            value,
            expected: "x > 0",
        })
    }
}

pub(crate) fn non_negative(name: &'static str, value: f64) -> Result<f64> {
    if value >= 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Domain {
            name,
            value,
            expected: "x >= 0",
        })
    }
}
