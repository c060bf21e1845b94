//! Command implementations behind the `tsd` binary.

pub mod commands;
pub mod config;

pub use commands::{cmd_mesh_info, cmd_optimize, cmd_verify, ExitStatus};
pub use config::{ConfigError, RunConfig, VerificationConfig};
