//! Driver behind the `monoamr` binary.

pub mod config;
pub mod run;
