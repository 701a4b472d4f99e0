//! Ergodicity and filter-stability laboratory.
//!
//! Exact total-variation and bounded-Lipschitz computations on finite models,
//! conditional-mixing probes for hidden Markov models, exact and particle
//! filters, coupling experiments, and four desk-scale stochastic models
//! (spectral heat equation, 2-d Navier–Stokes vorticity, an attractive spin
//! ring, and a scalar delay SDE), tied together by a reproducible experiment
//! runner with deterministic, replayable randomness.

pub mod conditional;
pub mod coupling;
pub mod experiment;
pub mod filter;
pub mod linalg;
pub mod markov;
pub mod measure;
pub mod models;
pub mod rng;

use thiserror::Error;

/// Unified error type for every fallible operation in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{0}")]
    CapExceeded(String),
    #[error("degenerate model: {0}")]
    Degenerate(String),
    #[error("internal solver failure: {0}")]
    Solver(String),
    #[error("numerical blow-up: {0}")]
    Blowup(String),
    #[error("no unique stationary law: {0}")]
    MultipleErgodicClasses(String),
    #[error("io failure: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Tolerance for "these weights form a probability vector" checks.
pub const PROB_TOL: f64 = 1e-12;

/// Every total-variation or bounded-Lipschitz distance lies in [0, 2].
pub const TV_CAP: f64 = 2.0;
