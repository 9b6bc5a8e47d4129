//! Experiment runner: configuration, presets, pipeline and file formats.

pub mod config;
pub mod experiment;
pub mod io;
pub mod presets;

pub use config::ExperimentConfig;
pub use experiment::{
    decimate, run_battery, run_experiment, write_outputs, ExperimentOutcome, Report, TrialBatteryResult,
};
pub use io::{load_system_file, save_system_file};
