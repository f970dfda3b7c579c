//! Configuration, experiment recipes and the commands behind the `evsched`
//! binary.

pub mod commands;
pub mod config;

pub use commands::{cmd_audit, cmd_simulate, cmd_solve, AuditOutcome, RunRow, SolveOutcome};
pub use config::{Config, ConfigError, ConfigSource};
