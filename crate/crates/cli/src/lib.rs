//! Configuration, orchestration and file output for the `snls` binary.
//!
//! Output files (all under `run.out`):
//!
//! | command    | files |
//! |------------|-------|
//! | `simulate` | `trajectory_L{n}_{i}.csv`, `events_L{n}_{i}.csv`, optional `states_L{n}_{i}.csv`, `summary.json` |
//! | `converge` | `converge.csv`, `converge_summary.json` |
//! | `moments`  | `moments.csv`, `levels.csv`, optional `aldous.csv`, `moments_summary.json` |
//! | `verify`   | `verify_report.txt`, `verify_report.json` |
//!
//! CSV files begin with `# schema_version=1 config_hash=<16 hex digits>`;
//! JSON files carry `schema_version`, `config_hash`, `command` and `version`.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod verify;

pub use commands::{cmd_converge, cmd_moments, cmd_simulate};
pub use config::{Overrides, RunConfig};
pub use error::CliError;
pub use verify::cmd_verify;
