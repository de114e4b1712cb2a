//! Command-line front end: file formats, the bundled four-disk benchmark and
//! the `mmred` subcommands.

pub mod bench;
pub mod commands;
pub mod error;
pub mod io;

pub use error::{CliError, CliResult};
