use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: file is empty", path.display())]
    EmptyFile { path: PathBuf },
    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: u64, message: String },
    #[error("{}: duplicate cell for unit {unit:?}, period {period:?}", path.display())]
    DuplicateCell { path: PathBuf, unit: String, period: String },
    #[error("{}: unbalanced panel, unit {unit:?} has no row for period {period:?}", path.display())]
    UnbalancedPanel { path: PathBuf, unit: String, period: String },
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Core(#[from] lpqr_core::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    /// Machine-readable category printed with every failure.
    pub fn category(&self) -> &'static str {
        use lpqr_core::Error as E;
        match self {
            Self::Usage(_) => "usage",
            Self::Io { .. } => "io",
            Self::EmptyFile { .. } | Self::Parse { .. } | Self::DuplicateCell { .. } | Self::UnbalancedPanel { .. } => {
                "data"
            }
            Self::Json(_) => "data",
            Self::Core(e) => match e {
                E::InvalidConfig(_) | E::EmptyGrid | E::RankTooLarge { .. } => "usage",
                E::SvdFailure | E::NonFiniteIterate { .. } | E::AllFitsFailed => "solver",
                _ => "data",
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "usage" => 2,
            "data" | "io" => 3,
            _ => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
