//! Command-line front end: reproducible experiments and thin wrappers over `irm_core`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod experiments;
pub mod expr;
pub mod report;
pub mod table;

pub use commands::{run, Cli, EXIT_MISMATCH, EXIT_PASS, EXIT_USAGE};
pub use experiments::{run_experiment, Overrides, EXPERIMENTS};
pub use report::{Check, ExperimentReport, Origin};
pub use table::Table;
