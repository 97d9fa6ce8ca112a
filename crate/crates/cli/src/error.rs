use std::path::{Path, PathBuf};

use thiserror::Error;

/// Exit status for successful runs.
pub const EXIT_OK: i32 = 0;
pub const EXIT_OUTPUT: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {}: {source}", path.display())]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {}: {source}", path.display())]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}:{line}:{column}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid configuration{}:\n  {}", origin(path), problems.join("\n  "))]
    Invalid {
        path: Option<PathBuf>,
        problems: Vec<String>,
    },
    #[error("solver failed: {0}")]
    Solver(String),
    #[error("{failed} of {total} verification checks failed")]
    Verification { failed: usize, total: usize },
}

fn origin(path: &Option<PathBuf>) -> String {
    path.as_ref()
        .map(|p| format!(" in {}", p.display()))
        .unwrap_or_default()
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Write { .. } => EXIT_OUTPUT,
            CliError::Read { .. } | CliError::Parse { .. } | CliError::Invalid { .. } => {
                EXIT_CONFIG
            }
            CliError::Solver(_) => EXIT_SOLVER,
            CliError::Verification { .. } => EXIT_VERIFY,
        }
    }

    pub(crate) fn parse(path: &Path, e: serde_json::Error) -> Self {
        let text = e.to_string();
        // serde_json appends the position, which is reported separately
        let message = match text.rsplit_once(" at line ") {
            Some((m, _)) => m.to_owned(),
            None => text,
        };
        CliError::Parse {
            path: path.to_owned(),
            line: e.line(),
            column: e.column(),
            message,
        }
    }

    pub(crate) fn write(path: &Path, source: impl Into<std::io::Error>) -> Self {
        CliError::Write {
            path: path.to_owned(),
            source: source.into(),
        }
    }

    pub(crate) fn core(path: Option<&Path>, e: oumse::Error) -> Self {
        let path = path.map(Path::to_owned);
        match e {
            oumse::Error::InvalidConfig(v) => CliError::Invalid {
                path,
                problems: v.iter().map(ToString::to_string).collect(),
            },
            oumse::Error::Domain(msg) => CliError::Invalid {
                path,
                problems: vec![msg],
            },
            oumse::Error::Solver(f) => CliError::Solver(f.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
