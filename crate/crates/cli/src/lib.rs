//! Command-line front end for `eeqcbf-core`: JSON configs, CSV traces and
//! SVG plots of the preset experiments.

pub mod config;
mod error;
pub mod plot;
pub mod run;
pub mod trace;

pub use error::CliError;
