//! Library side of the `vqvi` command: solver runs with exact scoring,
//! sweep grids with CSV output, and the diagnostic table.

pub mod bench;
mod cli;
pub mod error;
pub mod report;
pub mod runner;
pub mod verify;

pub use cli::run;
