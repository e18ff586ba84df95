//! Command-line runner, evaluation harness and network service for the
//! handover simulator.

pub mod commands;
pub mod server;

pub use commands::{run, Cli};
