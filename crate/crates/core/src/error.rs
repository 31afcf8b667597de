use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("degenerate channel for user {0}: zero norm")]
    DegenerateChannel(usize),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::NonFinite(_) => "non-finite",
            Error::Domain(_) => "domain",
            Error::DegenerateGeometry(_) => "degenerate-geometry",
            Error::DegenerateChannel(_) => "degenerate-channel",
            Error::Contract(_) => "contract",
            Error::Config(_) => "config",
            Error::Parse(_) => "parse",
            Error::Checkpoint(_) => "checkpoint",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
        }
    }
}
