//! Configuration, orchestration and export behind the `vshp` binary.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{compare, eigen, seed_scenarios, simulate, Job, Overrides};
pub use config::{parse_config, parse_config_str, RunConfig, SchemaError};
pub use output::{write_atomic, Manifest};
