//! Configuration files, field CSV files, run reports and the commands of
//! the `varinf` executable. The numerics live in `varinf_core`.

// negated comparisons are used deliberately so that NaN fails every check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod csvio;
pub mod report;

pub use commands::{cmd_report, cmd_solve, cmd_sweep, cmd_verify, exit_code};
pub use config::{parse_config, ConfigError, RunConfig, ValidationError};
