//! IO, parallel execution and the command-line front end for
//! `clusterkit-core`.

pub mod cli;
pub mod config;
pub mod data;
pub mod exec;
pub mod report;

pub use cli::{run, run_with_io};
pub use exec::RayonExecutor;
