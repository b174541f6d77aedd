use thiserror::Error;

/// Error taxonomy shared by every module in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes that cannot be combined (conv channel mismatch, loss vs label count, ...).
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// Spatial arithmetic that produces an empty or fractional output extent.
    #[error("geometry: {0}")]
    Geometry(String),
    /// A value outside the documented domain of a parameter.
    #[error("invalid argument: {0}")]
    Argument(String),
    /// An API usage rule was broken (stepping without gradients, non-scalar loss, ...).
    #[error("contract violation: {0}")]
    Contract(String),
    /// An index outside its valid range (labels, stage ids, grid locations).
    #[error("out of range: {0}")]
    Range(String),
    /// Malformed external data (dataset records, checkpoints, config text).
    #[error("parse: {0}")]
    Parse(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn dimension(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
    pub fn geometry(msg: impl Into<String>) -> Self {
        Error::Geometry(msg.into())
    }
    pub fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
    pub fn range(msg: impl Into<String>) -> Self {
        Error::Range(msg.into())
    }
    pub fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }
}
