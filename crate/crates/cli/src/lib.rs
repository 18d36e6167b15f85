//! File formats, orchestration and the `mfin` command line on top of
//! `mfin-core`.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod guard;
pub mod harness;
pub mod io;
pub mod manifest;
pub mod mfin_run;
pub mod report;
pub mod synthetic;

pub use error::{CliError, Result};
