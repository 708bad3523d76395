//! Command-line surface of `lpqr`: panel CSV ingestion, result files and the
//! `fit`, `tune`, `simulate`, `factors` and `bench` commands.

mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use cli::cli_main;
pub use config::RunConfig;
pub use error::{CliError, Result};
pub use io::{read_panel_csv, write_fit, write_panel_csv};
