//! File formats, HTTP providers and the command-line harness around
//! [`mael_core`].

pub mod artifacts;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod openai;
pub mod pool;
pub mod report;

pub use error::AppError;
