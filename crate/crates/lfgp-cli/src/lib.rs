//! Library surface of the `lfgp` binary: config parsing, trial ingestion,
//! chain persistence, CSV emission, and the subcommand implementations.

pub mod chain_file;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod outputs;
