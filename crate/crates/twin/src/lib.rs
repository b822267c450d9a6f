//! Std companion of `chaintwin-core`: persistence, the ingestion queue, the
//! HTTP service and the command-line interface.

pub mod api;
pub mod cli;
pub mod config;
pub mod engine;
pub mod error;
pub mod parallel;
pub mod store;
pub mod stream;
pub mod tables;

pub use config::Config;
pub use engine::Engine;
pub use error::{EngineError, Result};
