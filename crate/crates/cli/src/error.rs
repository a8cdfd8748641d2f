use std::path::Path;

use carfollow::fit::LibraryError;
use carfollow::ingest::IngestError;
use carfollow::report::ReportError;
use thiserror::Error;

/// Every failure the command line reports, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("self-test failed: {0}")]
    SelfTest(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Format(String),
    #[error("{0}")]
    Config(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::SelfTest(_) => 1,
            CliError::Io(_) => 2,
            CliError::Format(_) => 3,
            CliError::Config(_) => 4,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    pub fn ingest(path: &Path, e: IngestError) -> Self {
        match e {
            IngestError::Io(e) => CliError::io(path, e),
            IngestError::Schema(_) => CliError::Config(format!("{}: {e}", path.display())),
            e => CliError::Format(format!("{}: {e}", path.display())),
        }
    }

    pub fn library(path: &Path, e: LibraryError) -> Self {
        CliError::Format(format!("{}: {e}", path.display()))
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        CliError::Io(e.to_string())
    }
}
