use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Schema violation; `pointer` is a JSON pointer into the config.
    #[error("config error at {pointer}: {message}")]
    Config { pointer: String, message: String },
    #[error("validation error: {0}")]
    Validation(#[from] feller_uniq::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn config(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config { pointer: pointer.into(), message: message.into() }
    }

    /// 2 when the run could not start, 3 when the inputs failed validation.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } | CliError::Io { .. } => 2,
            CliError::Validation(_) => 3,
        }
    }
}
