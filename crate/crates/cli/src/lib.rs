//! Command-line pipeline over a project file: `datagen` characterizes the
//! target, `select` keeps the influential flags, `tune` searches them, and
//! `report` tabulates the tuning runs.

pub mod commands;
pub mod dataset;
pub mod error;
pub mod project;

pub use error::{CliError, Result};
pub use project::{Project, ProjectConfig};
