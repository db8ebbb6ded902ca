use nalgebra::DVector;
use thiserror::Error;

use crate::simloop::Sample;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid configuration value for `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("non-finite derivative at t = {t}")]
    Integration { t: f64, state: DVector<f64> },

    #[error("unsupported input dimension {0} (at most 4)")]
    UnsupportedDimension(usize),

    #[error("simulation diverged after t = {}", .last.t)]
    Diverged { last: Box<Sample> },

    #[error("ε-feasibility check failed: {0}")]
    Feasibility(String),
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            got,
        })
    }
}
