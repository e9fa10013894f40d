//! Command-line front end and file formats for `deferral-core`.

pub mod app;
pub mod config;
pub mod error;
pub mod figures;
pub mod report;
pub mod table;

pub use app::{run, Cli};
pub use error::CliError;
