//! Command-line front end: run configuration and the pipeline commands.

pub mod commands;
pub mod config;
