use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("infeasible step: sales {sales} exceed stock {stock}")]
    InfeasibleStep { stock: u64, sales: u64 },

    #[error("infeasible trace at period {period}: {reason}")]
    InfeasibleTrace { period: usize, reason: String },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("period {period} out of range 1..={horizon}")]
    PeriodOutOfRange { period: usize, horizon: usize },

    #[error("model-infeasible trace: no trajectory has positive likelihood under the given parameters")]
    ModelInfeasible,

    #[error("belief collapsed at period {period}")]
    BeliefCollapsed { period: usize },

    #[error("enumeration limit exceeded ({0} states)")]
    EnumerationLimit(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown {kind} strategy `{name}` (available: {available})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: String,
    },

    #[error("trace file row {row}: {message}")]
    TraceFile { row: usize, message: String },

    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    /// True for failures caused by data the model cannot explain, as opposed to
    /// malformed input or bad arguments.
    pub fn is_model_infeasible(&self) -> bool {
        matches!(
            self,
            Error::InfeasibleTrace { .. }
                | Error::InfeasibleStep { .. }
                | Error::ModelInfeasible
                | Error::BeliefCollapsed { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
