//! Monte Carlo study runner, report writers and the `somiv` command line.

pub mod cli;
pub mod config;
pub mod report;
pub mod study;
