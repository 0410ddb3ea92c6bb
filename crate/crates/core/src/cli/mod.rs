//! Command-line layer: configuration, cache, locking and report files.

pub mod cache;
pub mod commands;
pub mod config;
pub mod lock;
pub mod report;

pub use commands::{run, CommandName, Outcome, RunOptions};
pub use config::RunConfig;
