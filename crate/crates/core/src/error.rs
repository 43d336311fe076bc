use thiserror::Error;

/// Errors produced by constructions, measurements and oracles.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid interval [{lo}, {hi}]: endpoints must be finite with lo <= hi")]
    InvalidInterval { lo: f64, hi: f64 },

    #[error("intervals [{prev_lo}, {prev_hi}] and [{next_lo}, {next_hi}] overlap or touch (gap {gap})")]
    Disjointness {
        prev_lo: f64,
        prev_hi: f64,
        next_lo: f64,
        next_hi: f64,
        gap: f64,
    },

    #[error("empty interval system")]
    EmptySystem,

    #[error("value set must contain at least two distinct finite points")]
    InvalidValueSet,

    #[error("expected {expected} values, got {got}")]
    ValueCount { expected: usize, got: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("system has zero diameter and cannot be normalized")]
    NotNormalizable,

    #[error("affine map scale must be finite and nonzero, got {0}")]
    SingularMap(f64),

    #[error("resulting degree {degree} exceeds the cap {cap}")]
    DegreeOverflow { degree: usize, cap: usize },

    #[error("repeated node {node} requires the locally-constant convention")]
    UnsupportedConfluency { node: String },

    #[error("base approximation failed at degree {degree}: measured error {measured}")]
    BaseFailure { degree: usize, measured: f64 },

    #[error("amplification impossible: inner error {0} >= 1")]
    AmplificationImpossible(f64),

    #[error("sandwich violated: oracle {oracle} <= measured {measured} <= certificate {certificate} does not hold")]
    SandwichViolation { oracle: f64, measured: f64, certificate: f64 },

    #[error("non-finite input: {0}")]
    NonFinite(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn precondition(msg: impl Into<String>) -> Error {
    Error::Precondition(msg.into())
}
