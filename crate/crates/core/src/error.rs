//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated an operation's preconditions (shape mismatch,
    /// empty input, out-of-range label, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A data file could not be parsed; carries the offending line.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// Experiment configuration rejected before any compute.
    #[error("config error: {0}")]
    Config(String),

    /// Dataset-level problem (inconsistent split, empty class, ...).
    #[error("data error: {0}")]
    Data(String),

    /// Episode sampling could not satisfy its contract.
    #[error("sampling error: {0}")]
    Sampling(String),

    /// A training run was set up with unusable inputs.
    #[error("training setup error: {0}")]
    TrainingSetup(String),

    /// Lookup of a class or superclass that is not registered.
    #[error("lookup error: {0}")]
    Lookup(String),

    /// An API contract was broken, e.g. replaying a stale gradient tape.
    #[error("contract violation: {0}")]
    ContractViolation(String),

    /// Evaluation episode violated the meta-test contract.
    #[error("evaluation setup error: {0}")]
    EvalSetup(String),

    /// Principal-component projection rejected degenerate input.
    #[error("projection error: {0}")]
    Projection(String),

    /// Model file did not conform to the persistence format.
    #[error("model format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code class for the CLI: 2 config, 3 data, 4 runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Parse { .. } | Error::Data(_) => 3,
            _ => 4,
        }
    }
}
