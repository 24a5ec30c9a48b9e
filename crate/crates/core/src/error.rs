use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument fell outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration document or parameter bundle was rejected.
    #[error("invalid configuration at `{field}`: {message}")]
    Config { field: String, message: String },

    /// A sample-size search exhausted its cap without reaching the target.
    #[error("no sample size up to {cap} reaches the target {target}")]
    NotFound { cap: u64, target: f64 },

    /// A robustness analysis could not be carried out for the given inputs.
    #[error("infeasible analysis: {0}")]
    Infeasible(String),

    /// A long-running computation was stopped by its caller.
    #[error("computation cancelled")]
    Cancelled,
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
