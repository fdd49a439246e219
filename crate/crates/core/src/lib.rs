//! Streaming multi-objective clustering over an aggregated AntTree synopsis.

pub mod anttree;
pub mod chromosome;
pub mod engine;
pub mod error;
pub mod evolution;
pub mod io;
pub mod metrics;
pub mod model;
pub mod objectives;
pub mod runner;
pub mod seeders;

pub use error::{Error, Result};
