//! Error taxonomy shared across the crate.

use thiserror::Error;

/// Errors surfaced by graph loading, training, and evaluation.
#[derive(Error, Debug)]
pub enum TapemError {
    /// Invalid configuration or usage (exit code 1).
    #[error("config error: {0}")]
    Config(String),

    /// Malformed input line (exit code 2).
    #[error("parse error in {path} line {line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// Referential integrity violation in the data (exit code 2).
    #[error("integrity error: {0}")]
    Integrity(String),

    /// Unknown id passed to a query (exit code 2).
    #[error("lookup error: {0}")]
    Lookup(String),

    /// Invalid input to a model operation (exit code 2).
    #[error("input error: {0}")]
    Input(String),

    /// I/O failure (exit code 2).
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Operand shapes do not agree (exit code 3).
    #[error("shape error: {left} vs {right} in {op}")]
    Shape {
        op: String,
        left: String,
        right: String,
    },

    /// Non-finite value or tolerance breach (exit code 3).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Caller broke an operation precondition (exit code 3).
    #[error("contract violation: {0}")]
    Contract(String),
}

impl TapemError {
    /// Process exit code for the CLI: 1 usage/config, 2 data integrity, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            TapemError::Config(_) => 1,
            TapemError::Parse { .. }
            | TapemError::Integrity(_)
            | TapemError::Lookup(_)
            | TapemError::Input(_)
            | TapemError::Io(_) => 2,
            TapemError::Shape { .. } | TapemError::Numeric(_) | TapemError::Contract(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, TapemError>;
