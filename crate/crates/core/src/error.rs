use serde::Serialize;
use thiserror::Error;

use crate::analysis::AnalysisError;
use crate::arrivals::ArrivalError;
use crate::config::ConfigError;
use crate::finite_sim::StateViolation;
use crate::limit_chain::checks::CheckError;
use crate::limit_chain::oracle::OracleError;
use crate::limit_chain::LimitViolation;
use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Arrival(#[from] ArrivalError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Check(#[from] CheckError),
    #[error("finite-n invariant violated: {0:?}")]
    Finite(StateViolation),
    #[error("limit-chain invariant violated: {0:?}")]
    Limit(LimitViolation),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("validation failed: {0}")]
    Validation(String),
}

impl From<StateViolation> for Error {
    fn from(v: StateViolation) -> Self {
        Error::Finite(v)
    }
}

impl From<LimitViolation> for Error {
    fn from(v: LimitViolation) -> Self {
        Error::Limit(v)
    }
}

/// Machine-readable form written on failure.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorReport {
    pub kind: &'static str,
    pub message: String,
    pub exit_code: i32,
}

impl Error {
    pub fn io(path: impl std::fmt::Display, e: impl std::fmt::Display) -> Self {
        Error::Io { path: path.to_string(), message: e.to_string() }
    }

    /// 2 config, 3 runtime, 4 validation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Validation(_) | Error::Finite(_) | Error::Limit(_) => 4,
            _ => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Model(ModelError::Overloaded { .. }) => "overloaded",
            Error::Model(ModelError::DegenerateNoise) => "degenerate_noise",
            Error::Model(_) => "model",
            Error::Arrival(_) => "arrivals",
            Error::Analysis(_) => "analysis",
            Error::Oracle(_) => "oracle",
            Error::Check(_) => "check",
            Error::Finite(_) | Error::Limit(_) | Error::Validation(_) => "validation",
            Error::Io { .. } => "io",
        }
    }

    pub fn report(&self) -> ErrorReport {
        ErrorReport { kind: self.kind(), message: self.to_string(), exit_code: self.exit_code() }
    }
}
