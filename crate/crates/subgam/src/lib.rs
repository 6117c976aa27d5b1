//! File formats, configuration and the command line for `subgam-core`.
//!
//! - [`config`]: flat `key = value` run configuration;
//! - [`csvio`]: long-format panel CSV in and out;
//! - [`results`]: result files written after a fit;
//! - [`bench`]: parallel Monte Carlo replicates and their report;
//! - [`cli`]: the `subgam` subcommands.

pub mod bench;
pub mod cli;
pub mod config;
pub mod csvio;
pub mod results;

pub use config::{ColumnMap, RunConfig, Transform};
pub use csvio::{read_long_csv, write_long_csv, IoError};
pub use results::write_results;
