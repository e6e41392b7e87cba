//! Crate-wide error type.

use crate::num::Scalar;
use thiserror::Error;

/// Everything that can go wrong while building or checking a scenario.
///
/// Witness-bearing variants carry exact scalar values so that callers (and the
/// acceptance suite) can assert them without loss.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error<S: Scalar> {
    #[error("objects index different outcome sets ({left} vs {right} outcomes)")]
    MismatchedSpace { left: usize, right: usize },

    #[error("filtrations have different horizons ({left} vs {right})")]
    HorizonMismatch { left: usize, right: usize },

    #[error("processes live on different time grids ({left} vs {right} steps)")]
    GridMismatch { left: usize, right: usize },

    #[error("process is not adapted: {detail}")]
    NotAdapted { detail: String },

    #[error("integrand is not predictable: {detail}")]
    NotPredictable { detail: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("not a martingale: conditional drift {drift} at time {time}, block {block}")]
    NotMartingale { time: usize, block: usize, drift: S },

    #[error(
        "martingales are not strongly orthogonal: compensator increment {value} \
         at time {time}, block {block} (pair {left}, {right})"
    )]
    NotStronglyOrthogonal {
        left: String,
        right: String,
        time: usize,
        block: usize,
        value: S,
    },

    #[error("structure condition fails at time {time}, block {block}: {detail}")]
    StructureConditionFails {
        time: usize,
        block: usize,
        detail: String,
    },

    #[error(
        "minimal martingale measure is not positive: 1 - lambda'*dM = {value} <= 0 \
         at time {time}, block {block}"
    )]
    MinimalMeasureNotPositive { time: usize, block: usize, value: S },

    #[error("bad index set: {0}")]
    BadIndexSet(String),

    #[error("hypothesis {hypothesis} fails: {witness}")]
    HypothesisFailed { hypothesis: String, witness: String },

    #[error("density hypothesis fails at time {time}, atom {atom}, theta {theta}")]
    DensityHypothesisFails {
        time: usize,
        atom: String,
        theta: String,
    },

    #[error("joint weight of ({outcome}, {theta}) is zero but required positive by the density hypothesis")]
    ZeroJointWeightInsideSupport { outcome: String, theta: String },

    #[error("certain default: hazard reaches 1 at time {time}, block {block}")]
    CertainDefault { time: usize, block: usize },

    #[error("{what} exceeds cap: {got} > {limit}")]
    CapExceeded {
        what: String,
        limit: usize,
        got: usize,
    },

    #[error("validation failed at {field}: {message}")]
    Validation { field: String, message: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("internal check failed: {0}")]
    CheckFailed(String),
}

impl<S: Scalar> Error<S> {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, S> = std::result::Result<T, Error<S>>;
