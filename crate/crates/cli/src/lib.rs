//! Configuration, output and validation suites behind the `kalikow` binary.

pub mod commands;
pub mod config;
pub mod emit;
pub mod oracle;
pub mod suites;
