//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by parsing, model construction, and solving.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error in {section} (line {line}): {message}")]
    Parse {
        section: String,
        line: usize,
        message: String,
    },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid threat configuration: {0}")]
    InvalidThreat(String),

    #[error("invalid plan: {}", violations.join("; "))]
    InvalidPlan { violations: Vec<String> },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("variable does not belong to this model")]
    ForeignVariable,

    #[error("solver backend `{backend}` failed: {message}")]
    Backend { backend: String, message: String },

    #[error("solve ended with status {status}: {context}")]
    NotOptimal { status: String, context: String },

    #[error(
        "dual variable `{name}` = {value} sits at its configured bound {bound}; \
         increase the dual bound factor"
    )]
    DualBoundActive {
        name: String,
        value: f64,
        bound: f64,
    },

    #[error(
        "strong-duality gap {gap:e} exceeds tolerance for attacker `{attacker}` \
         (primal {primal}, dual {dual})"
    )]
    DualityGap {
        attacker: String,
        primal: f64,
        dual: f64,
        gap: f64,
    },

    #[error(
        "column-and-constraint generation stalled at iteration {iteration}: every attacker \
         re-proposed a pooled vector while the relative gap {gap:e} exceeds the tolerance; \
         suspect an undersized big-M (theta span) or dual bound policy"
    )]
    CcgStalled { iteration: u32, gap: f64 },

    #[error("enumeration would require {required} operator solves, above the cap {cap}")]
    EnumerationCap { required: u128, cap: u64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
