//! Command-line front end for the dynamic-network inference engine: model
//! and evidence file parsing, session driving (filter / smooth / forecast),
//! record emission, and archived-series persistence.

pub mod commands;
pub mod format;
pub mod records;

pub use commands::CliError;
