use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index {index} out of range 1..={max}")]
    Index { index: usize, max: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// A dense n²×n² matrix would not fit in the configured memory budget.
    #[error(
        "capacity exceeded: n={n} needs {required} bytes for a dense {side}x{side} matrix, \
         budget is {budget} bytes; try a coarser grid (n <= {suggested_n})"
    )]
    Capacity {
        n: usize,
        side: usize,
        required: u64,
        budget: u64,
        suggested_n: usize,
    },

    #[error("parse error at line {line}{}: {msg}", col.map(|c| format!(", column {c}")).unwrap_or_default())]
    Parse {
        line: usize,
        col: Option<usize>,
        msg: String,
    },

    #[error("time error: {0}")]
    Time(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, col: Option<usize>, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            col,
            msg: msg.into(),
        }
    }
}
