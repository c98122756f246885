use std::path::PathBuf;

use flagtune_core::Error as CoreError;
use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Failures surfaced by the command-line pipeline. Each maps onto a kind
/// label and an exit status: 1 usage or bad input, 2 target failure,
/// 3 missing artifact from an earlier phase.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Target(String),
    #[error("{0}")]
    Dependency(String),
    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Data(_) => "data",
            CliError::Target(_) => "target",
            CliError::Dependency(_) => "dependency",
            CliError::Io { .. } => "io",
            CliError::Core(e) => match e {
                CoreError::TargetNotFound(_)
                | CoreError::CannotCharacterize
                | CoreError::AllInitialTrialsFailed
                | CoreError::DefaultRunFailed(_) => "target",
                CoreError::Io { .. } => "io",
                CoreError::MissingColumn(_) | CoreError::NonFinite(_) | CoreError::Json(_) => "data",
                _ => "config",
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "target" => 2,
            "dependency" => 3,
            _ => 1,
        }
    }

    /// `error[kind]: message` on one line.
    pub fn render(&self) -> String {
        let msg = self.to_string().split_whitespace().collect::<Vec<_>>().join(" ");
        format!("error[{}]: {msg}", self.kind())
    }
}
