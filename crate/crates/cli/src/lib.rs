//! Experiment harness for the quasi-dynamic traffic light controller:
//! TOML configuration, the scenario library and artifact emission.

pub mod config;
pub mod scenario;

pub use config::{parse_config, parse_config_str, ConfigError, ExperimentConfig, Preset, Scenario, VEBEROD_RATES};
pub use scenario::{run_scenario, Outcome, RunError};
