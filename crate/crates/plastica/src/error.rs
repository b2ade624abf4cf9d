use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid scenario ({invariant}): {detail}")]
    Invalid { invariant: String, detail: String },
    #[error("scenario has no [{0}] block")]
    MissingBlock(&'static str),
    #[error("unknown builtin scenario `{0}`")]
    UnknownBuiltin(String),
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("numerical failure: {0}")]
    Numeric(#[from] plastica_core::Error),
    #[error("malformed data file {path}: {detail}")]
    Format { path: PathBuf, detail: String },
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("output directory {0} exists and was not written by plastica")]
    OutputOccupied(PathBuf),
    #[error("failed checks: {}", .0.join(", "))]
    ChecksFailed(Vec<String>),
}

impl RunError {
    /// 0 success, 1 scenario or setup error, 2 numerical failure, 3 failed checks.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Numeric(_) => 2,
            RunError::ChecksFailed(_) => 3,
            _ => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        RunError::Io { path: path.into(), source }
    }
}
