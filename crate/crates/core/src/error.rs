use thiserror::Error;

/// Errors raised across the workbench.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition (index out of range, bad shape).
    #[error("contract violation: {0}")]
    Contract(String),

    /// The score function was asked about a next state whose probability is
    /// below the support floor. Usually a degenerate posterior sample.
    #[error(
        "numerical support: P({next_state} | s={state}, a={action}) = {prob:e} is below the pmf floor"
    )]
    NumericalSupport {
        state: usize,
        action: usize,
        next_state: usize,
        prob: f64,
    },

    #[error("empty dictionary: a discrepancy estimate needs at least one sample")]
    EmptyDictionary,

    /// Invalid configuration; `field` is the dotted key path that failed.
    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// A results bundle failed its consistency check on load.
    #[error("bundle integrity: {0}")]
    Bundle(String),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn contract(message: impl Into<String>) -> Self {
        Error::Contract(message.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
