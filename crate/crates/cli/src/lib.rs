//! Command-line plumbing around the `decision-boost` library.

pub mod config;
pub mod plot;
pub mod problem_file;
pub mod results;
pub mod runner;
