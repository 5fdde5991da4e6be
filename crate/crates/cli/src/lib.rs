//! Library side of the `kernelscore` command-line tool.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
