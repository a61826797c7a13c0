//! Estimation and verification on top of the simulators.

pub mod convergence;
pub mod drift;
pub mod stationary;
pub mod tail;
pub mod waiting;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("too few samples: need {need}, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("empty tail: {usable} usable bins in [{x_lo}, {x_hi}], need 5")]
    EmptyTail { x_lo: f64, x_hi: f64, usable: usize },
    #[error("log Lyapunov ratio {log_ratio:e} at step {step} (theta={theta}) is not representable")]
    Overflow { theta: f64, step: u64, log_ratio: f64, y_bar: Vec<f64> },
    #[error("invalid analysis parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Arrival(#[from] crate::arrivals::ArrivalError),
    #[error("finite-n invariant violated: {0:?}")]
    Finite(crate::finite_sim::StateViolation),
    #[error("limit-chain invariant violated: {0:?}")]
    Limit(crate::limit_chain::LimitViolation),
}

impl From<crate::finite_sim::StateViolation> for AnalysisError {
    fn from(v: crate::finite_sim::StateViolation) -> Self {
        AnalysisError::Finite(v)
    }
}

impl From<crate::limit_chain::LimitViolation> for AnalysisError {
    fn from(v: crate::limit_chain::LimitViolation) -> Self {
        AnalysisError::Limit(v)
    }
}
