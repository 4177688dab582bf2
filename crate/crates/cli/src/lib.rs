//! Config-driven front end: parse a config, run it, emit a JSON report.

pub mod config;
pub mod report;
pub mod run;

pub use config::{validate_config, Command, ConfigError, ExperimentConfig};
pub use run::{run_experiment, Outcome};

/// Exit codes of the `hcg` binary.
pub mod exit {
    /// Ran; verdict matches `expect.verdict` or none was given.
    pub const OK: i32 = 0;
    /// Ran; verdict differs from `expect.verdict`.
    pub const MISMATCH: i32 = 1;
    /// Config could not be read or validated, or the engine rejected it.
    pub const CONFIG: i32 = 2;
}
