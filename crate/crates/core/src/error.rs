use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameters or configuration values.
    #[error("configuration error: {0}")]
    Config(String),

    /// Input data that does not satisfy an operation's requirements.
    #[error("input error: {0}")]
    Input(String),

    /// An internal contract between pipeline stages was violated.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("failed to parse config: {0}")]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    /// Wraps an error with the scenario/method it came from.
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Process exit code: 1 for input/config problems, 2 for contract violations.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Contract(_) => 2,
            Error::Context { source, .. } => source.exit_code(),
            _ => 1,
        }
    }
}
