use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum NqsError {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("index {index} out of range for {what} of length {len}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("qubit indices must be distinct, got {0} twice")]
    DuplicateQubit(usize),

    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },

    #[error("non-finite value in {what} at hidden unit {unit}")]
    NonFiniteUnit { what: &'static str, unit: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("target amplitude vanished at {attempts} initial bitstrings; chain cannot start")]
    SamplerStuck { attempts: usize },

    #[error(
        "overlap denominator magnitude {magnitude:.3e} below 1e-12; states nearly orthogonal"
    )]
    DegenerateOverlap { magnitude: f64 },

    #[error("hadamard learning failed after {restarts} restarts (best overlap {best_overlap})")]
    LearnerFailed {
        restarts: usize,
        best_overlap: f64,
        trace: Vec<crate::learner::TracePoint>,
    },

    #[error("variational energy diverged at iteration {iteration}")]
    EnergyDiverged {
        iteration: usize,
        trace: Vec<crate::groundstate::EnergyPoint>,
    },

    #[error("statevector backend limited to {limit} qubits, requested {requested}")]
    QubitLimit { requested: usize, limit: usize },

    #[error("gate {gate} has no exact parameter-update rule")]
    NoExactRule { gate: String },

    #[error("circuit parse error at line {line}: {msg}")]
    CircuitParse { line: usize, msg: String },

    #[error("malformed state file: {0}")]
    StateFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, NqsError>;
