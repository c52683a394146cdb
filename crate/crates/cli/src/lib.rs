//! Command-line driver: prepare → train → calibrate → evaluate / sweep /
//! ablate / predict, with every stage reading and writing plain JSON and CSV
//! files in one output directory.

pub mod app;
pub mod commands;
pub mod config;
pub mod error;

pub use app::{run, Cli};
pub use config::RunConfig;
pub use error::CliError;
