//! Command-line workflows for the `memsolve` binary: `solve`, `smallgap`,
//! `sweep` and `bound`. Each command computes everything first and only then
//! writes its output directory, ending with `manifest.json`.

pub mod commands;
pub mod export;
pub mod manifest;

pub use commands::{cmd_bound, cmd_smallgap, cmd_solve, cmd_sweep, Failure, SmallGapMode};
