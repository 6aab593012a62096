use std::path::PathBuf;

use thiserror::Error;

/// Failures of a CLI run, each mapped to a process exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("numerical failure: {0}")]
    Numerical(pinbridge::Error),

    #[error("acceptance failed: {0}")]
    Acceptance(String),

    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub const EXIT_OK: u8 = 0;
pub const EXIT_IO: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
pub const EXIT_ACCEPTANCE: u8 = 4;

impl CliError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } => EXIT_CONFIG,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Acceptance(_) => EXIT_ACCEPTANCE,
            CliError::Io { .. } => EXIT_IO,
        }
    }
}

impl From<pinbridge::Error> for CliError {
    fn from(e: pinbridge::Error) -> Self {
        use pinbridge::Error as E;
        let field = match &e {
            E::InvalidParam { param, .. } => param.clone(),
            E::UnknownFamily(_) => "family.name".into(),
            E::Domain { .. } => "t_end".into(),
            E::InvalidGrid(_) => "grid".into(),
            E::Precondition(_) => "family".into(),
            _ => return CliError::Numerical(e),
        };
        CliError::Config {
            field,
            message: e.to_string(),
        }
    }
}
