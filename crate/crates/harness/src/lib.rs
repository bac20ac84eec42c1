//! Scenario harness for the simulated tendon-driven arm: configuration,
//! closed-loop runs of the online updaters, metrics and plots.

pub mod arm;
pub mod config;
pub mod error;
pub mod experiment;
pub mod output;
pub mod rig;
pub mod scenarios;

pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
pub use experiment::Experiment;
pub use scenarios::{run, Outcome, Scenario};
