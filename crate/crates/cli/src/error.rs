use std::path::PathBuf;
use std::process::ExitCode;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {reason}", path.display())]
    BadInput { path: PathBuf, reason: String },

    #[error("all {0} layers failed")]
    AllLayersFailed(usize),

    #[error(transparent)]
    Core(#[from] dfq_core::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn bad_input(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        CliError::BadInput {
            path: path.into(),
            reason: reason.to_string(),
        }
    }

    /// 1: every layer failed, 2: invalid arguments, 3: unreadable or
    /// unwritable files.
    pub fn exit_code(&self) -> ExitCode {
        use dfq_core::Error as E;
        let code = match self {
            CliError::AllLayersFailed(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Io { .. } | CliError::BadInput { .. } => 3,
            CliError::Core(e) => match e {
                E::InvalidBitWidth(..) | E::InvalidArgument(_) => 2,
                E::Io { .. } | E::Format { .. } | E::Json(_) => 3,
                _ => 1,
            },
        };
        ExitCode::from(code)
    }
}
