//! Library surface of the command-line harness: configuration loading,
//! deterministic file emission, report generation, and the subcommand
//! drivers. The `mmlab` binary is a thin argument parser over this.

pub mod commands;
pub mod config;
pub mod io;
pub mod report;
