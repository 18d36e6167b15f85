use std::path::PathBuf;

use thiserror::Error;

use mfin_core::calendar::CalendarError;
use mfin_core::ingest::IngestError;
use mfin_core::metrics::MetricError;
use mfin_core::mfin::MfinError;
use mfin_core::portfolio::PortfolioError;
use mfin_core::splits::SplitError;
use mfin_core::strategies::StrategyError;

use crate::guard::LookaheadViolation;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("data integrity: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Lookahead(#[from] LookaheadViolation),
}

impl CliError {
    /// Process exit status.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) | CliError::Io { .. } | CliError::Lookahead(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<CalendarError> for CliError {
    fn from(e: CalendarError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<SplitError> for CliError {
    fn from(e: SplitError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<PortfolioError> for CliError {
    fn from(e: PortfolioError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<StrategyError> for CliError {
    fn from(e: StrategyError) -> Self {
        match e {
            StrategyError::Signal(s) => CliError::Config(s.to_string()),
            StrategyError::Portfolio(p) => p.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<MfinError> for CliError {
    fn from(e: MfinError) -> Self {
        match e {
            MfinError::Config(_) => CliError::Config(e.to_string()),
            MfinError::NonFinite { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
