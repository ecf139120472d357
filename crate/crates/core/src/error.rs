use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("iterate diverged in round {round} (norm {norm:e})")]
    Diverged { round: usize, norm: f64 },

    #[error("minimum plan needs {required}s but the round budget is {budget}s")]
    InfeasibleBudget { required: f64, budget: f64 },

    #[error("aggregation weights sum to {sum}, expected 1")]
    WeightSum { sum: f64 },

    #[error("brute-force search space too large: {0}")]
    SearchSpaceTooLarge(String),

    #[error("global optimum w* is unknown for this task")]
    MissingOptimum,

    #[error("client {client} received an empty partition")]
    EmptyPartition { client: usize },

    #[error("line {line}: {message}")]
    MalformedRow { line: u64, message: String },

    #[error("line {line}: unknown category {value:?} in column {column:?}")]
    UnknownCategory {
        line: u64,
        column: String,
        value: String,
    },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
