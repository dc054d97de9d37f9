//! Command line front end and JSON API of the engine.

pub mod api;
pub mod commands;

pub use commands::{run, Cli};
