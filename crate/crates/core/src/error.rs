use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// An iterative method failed to converge or a step cap was exceeded.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// A grid or transform would exceed the configured memory budget.
    #[error("resource error: {message} (advisory: {advisory})")]
    Resource { message: String, advisory: String },
    /// The request was refused because its inputs cannot support a sound answer.
    #[error("refused: {0}")]
    Refused(String),
    /// Invalid configuration; `field` names the offending entry.
    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub(crate) fn resource(msg: impl Into<String>, advisory: impl Into<String>) -> Self {
        Error::Resource {
            message: msg.into(),
            advisory: advisory.into(),
        }
    }

    pub fn config(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: msg.into(),
        }
    }
}
