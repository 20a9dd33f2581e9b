use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("approximator has {actual} outputs but {context} needs {expected}")]
    OutputArity {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in {context} at coordinate {index}")]
    NonFinite { context: String, index: usize },

    #[error("index {index} out of range (len {len}) in {context}")]
    OutOfRange {
        context: &'static str,
        index: usize,
        len: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("behavior probability must be positive (step {step}, got {value})")]
    ZeroBehaviorProb { step: usize, value: f64 },

    #[error("empty action set")]
    EmptyActionSet,

    #[error("singular linear system in {context}")]
    SingularSystem { context: &'static str },

    #[error("feature Gram matrix is singular (condition estimate {condition:e})")]
    SingularGram { condition: f64 },

    #[error("chain is reducible: {0} recurrent classes reachable from the start distribution: {1:?}")]
    ReducibleChain(usize, Vec<Vec<usize>>),

    #[error("{context} did not converge within {iterations} iterations")]
    NotConverged { context: &'static str, iterations: usize },

    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    #[error("environment step {step} failed: {reason}")]
    EnvStep { step: usize, reason: String },
}
