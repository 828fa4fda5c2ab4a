use std::path::Path;

use lanebench_core::Error as CoreError;

/// Exit codes. 2 is left to argument parsing errors reported by clap.
pub mod exit {
    pub const INTERNAL: i32 = 1;
    pub const CONFIG: i32 = 3;
    pub const MISSING_INPUT: i32 = 4;
    pub const BUDGET_EXHAUSTED: i32 = 5;
    pub const INVALID_INPUT: i32 = 6;
    pub const DIVERGED: i32 = 7;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing input: {0}")]
    Missing(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn missing(path: &Path, e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::Missing(format!("{}: {e}", path.display()))
        } else {
            CliError::Core(CoreError::Io(e))
        }
    }

    fn classify(&self) -> (&'static str, i32) {
        match self {
            CliError::Config(_) => ("config", exit::CONFIG),
            CliError::Missing(_) => ("missing_input", exit::MISSING_INPUT),
            CliError::Invalid(_) => ("invalid_input", exit::INVALID_INPUT),
            CliError::Core(e) => match e {
                CoreError::SamplingExhausted { .. } => ("budget_exhausted", exit::BUDGET_EXHAUSTED),
                CoreError::Divergence { .. } => ("training_diverged", exit::DIVERGED),
                CoreError::Io(io) if io.kind() == std::io::ErrorKind::NotFound => {
                    ("missing_input", exit::MISSING_INPUT)
                }
                CoreError::Io(_) => ("io", exit::INTERNAL),
                CoreError::InvalidDomain(_) | CoreError::RestrictionOutsideParent { .. } => {
                    ("config", exit::CONFIG)
                }
                _ => ("invalid_input", exit::INVALID_INPUT),
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.classify().1
    }

    /// One-line JSON object for stderr.
    pub fn to_json(&self) -> String {
        let (kind, code) = self.classify();
        serde_json::json!({
            "error": { "kind": kind, "exit_code": code, "message": self.to_string() }
        })
        .to_string()
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(CoreError::Io(e))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(CoreError::Json(e))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Core(CoreError::Csv(e))
    }
}
