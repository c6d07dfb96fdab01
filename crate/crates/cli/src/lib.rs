//! Configuration, file formats, validation suites and the command-line
//! driver around `vctl-core`.

pub mod commands;
pub mod config;
pub mod error;
pub mod format;
pub mod scenario;
pub mod suite;

pub use error::{AppError, AppResult};
