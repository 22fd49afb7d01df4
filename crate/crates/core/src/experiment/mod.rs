//! Declarative experiments: JSON configs, parameter sweeps and scripted
//! command replays.

pub mod config;
pub mod replay;
pub mod runner;

pub use config::ExperimentConfig;
pub use replay::{run_replay, CommandScript};
pub use runner::{certify_experiment, run_experiment};
