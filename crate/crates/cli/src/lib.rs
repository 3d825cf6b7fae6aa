//! File formats, model snapshots and the `codetext` command line.

pub mod cli;
pub mod formats;
pub mod models;
pub mod snapshot;
