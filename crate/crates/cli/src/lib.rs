//! Command-line driver of the pooling pipeline.

pub mod commands;
pub mod config;
pub mod error;

pub use error::CliError;
