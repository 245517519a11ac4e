//! Command-line front end for the decomposition library.

pub mod args;
pub mod audio;
pub mod commands;
pub mod manifest;

pub use commands::{run, Outcome};
