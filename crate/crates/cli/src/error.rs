use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: u8 = 0;
    pub const PARTIAL_FAILURE: u8 = 1;
    pub const IO: u8 = 2;
    pub const CONFIG: u8 = 3;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: depthforge::Error,
    },

    #[error("{context}: {source}")]
    Failed {
        context: String,
        #[source]
        source: depthforge::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Io { .. } => exit::IO,
            CliError::Failed { .. } => exit::PARTIAL_FAILURE,
        }
    }

    /// Sorts a library error into the exit-code class it belongs to.
    pub fn from_lib(context: impl Into<String>, source: depthforge::Error) -> Self {
        use depthforge::Error as E;
        let context = context.into();
        match source {
            E::Config(msg) => CliError::Config(format!("{context}: {msg}")),
            E::Io(_) | E::Json(_) | E::Csv(_) | E::Format(_) => CliError::Io { context, source },
            _ => CliError::Failed { context, source },
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Adds a context string to library results.
pub trait Context<T> {
    fn context(self, context: impl FnOnce() -> String) -> CliResult<T>;
}

impl<T> Context<T> for depthforge::Result<T> {
    fn context(self, context: impl FnOnce() -> String) -> CliResult<T> {
        self.map_err(|e| CliError::from_lib(context(), e))
    }
}

impl<T> Context<T> for std::io::Result<T> {
    fn context(self, context: impl FnOnce() -> String) -> CliResult<T> {
        self.map_err(|e| CliError::Io {
            context: context(),
            source: e.into(),
        })
    }
}
