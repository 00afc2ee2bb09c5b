//! Hybrid Bayes-MLE estimation: higher-order expansions of posterior-type
//! estimators, excess asymptotic bias diagnostics, matching-prior
//! construction, and simulation benchmarks.

pub mod bias_lab;
pub mod cli;
pub mod error;
pub mod estimators;
pub mod expansion_engine;
pub mod gauss_moments;
pub mod index_algebra;
pub mod model_kit;
pub mod numerics;
pub mod prior_forge;
pub mod sim_bench;

pub use error::{EngineError, Result};

/// Entry point for the command line binary; returns the process exit code.
pub fn run() -> i32 {
    cli::parse_and_dispatch(std::env::args_os())
}
