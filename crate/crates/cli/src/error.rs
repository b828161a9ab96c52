use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// A named input could not be ingested.
    #[error("{flag}: {source}")]
    Input {
        flag: &'static str,
        #[source]
        source: cosub::Error,
    },

    #[error("{}: invalid config at `{at}`: {message}", path.display())]
    Config {
        path: PathBuf,
        at: String,
        message: String,
    },

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Run(#[from] cosub::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn input(flag: &'static str) -> impl FnOnce(cosub::Error) -> Self {
        move |source| CliError::Input { flag, source }
    }

    /// 2 for usage and ingestion problems, 1 for failures while running.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input { .. } | CliError::Config { .. } | CliError::Usage(_) => 2,
            CliError::Run(_) | CliError::Io { .. } | CliError::Json(_) => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
