use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid law descriptor `{0}`")]
    BadDescriptor(String),
    #[error("invalid law: {0}")]
    InvalidLaw(String),
    #[error("support of the law has period {0}; an aperiodic law (gcd 1) is required")]
    Periodic(u64),
    #[error("the finite-mean construction needs a law with finite mean")]
    InfiniteMean,
    #[error("cycle length {0} has zero probability under this law")]
    UnreachableCycleLength(u64),
    #[error(
        "level resolves to {0}, which is not positive; horizon too small for the requested rate"
    )]
    NonPositiveLevel(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("tail of lattice pmf not certified: bound {0:e} exceeds tolerance")]
    UncertifiedTail(f64),
    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
