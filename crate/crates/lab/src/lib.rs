//! File formats, configuration, parallel campaign runner and command-line
//! front end around `crossing-core`.

pub mod campaign;
pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod pipeline;

pub use config::RunConfig;
pub use error::LabError;
