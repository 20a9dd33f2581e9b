//! Experiment harness for `gradtd`: JSON-configured runs, two-stage
//! hyperparameter sweeps, learning-curve plots and an invariant suite.
//!
//! Every run writes one CSV per seed whose bytes depend only on the config
//! and the seed, plus a manifest with timing information.

pub mod config;
pub mod error;
pub mod experiment;
pub mod plot;
pub mod run;
pub mod stats;
pub mod sweep;
pub mod verify;

pub use config::{AgentConfig, Budget, EnvConfig, ExperimentConfig};
pub use error::{HarnessError, Result};
pub use run::{run, RunOptions, RunSummary};
