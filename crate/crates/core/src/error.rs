use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid alphabet: {0}")]
    InvalidAlphabet(String),

    #[error("invalid scheme: {0}")]
    InvalidScheme(String),

    #[error("infeasible family: {0}")]
    Infeasible(String),

    #[error("index {index} out of range for {len} detectors")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("prefix length {k} out of range 1..={r}")]
    PrefixOutOfRange { k: usize, r: usize },

    #[error("enumeration budget exceeded: {what} needs {needed} items, budget is {budget}; use the Monte Carlo path instead")]
    BudgetExceeded {
        what: &'static str,
        needed: u128,
        budget: u128,
    },

    #[error("no closed form for {0}; use the Monte Carlo path instead")]
    NoClosedForm(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("degenerate alphabet: {0}")]
    Degenerate(String),

    #[error("config not found: {0}")]
    ConfigNotFound(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
