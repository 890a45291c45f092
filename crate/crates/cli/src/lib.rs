//! Command-line front end: config loading, solver dispatch and CSV output.

// `!(x > y)` is deliberate: it rejects NaN along with the failing case.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod run;

pub use config::{load_config, parse_config, ConfigError, RunConfig, RunOptions, SolverKind};
pub use run::{run, verify_outputs, RunReport};
