//! Simulation and verification toolkit for many-server FCFS queues with
//! lattice service times in the Halfin-Whitt regime.
//!
//! - [`model`]: service laws, QED scaling and derived constants
//! - [`arrivals`]: stationary renewal arrival streams
//! - [`finite_sim`]: the time-embedded `n`-server chain and an event-driven cross-check
//! - [`limit_chain`]: the Gaussian limiting chain, its pathwise checks and the `K = 1` oracle
//! - [`analysis`]: stationary estimation, tail fits, drift checks, convergence and waiting times
//! - [`cli`]: config-driven experiment runner

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod arrivals;
pub mod cli;
pub mod config;
mod error;
pub mod exec;
pub mod finite_sim;
pub mod limit_chain;
pub mod model;
pub mod rng;
pub mod stats;

pub use error::{Error, ErrorReport};
