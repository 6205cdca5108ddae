//! Occupancy-grid scene modeling and reconstruction-based anomaly detection
//! for aerial surveillance.

pub mod commands;
pub mod detect;
pub mod error;
pub mod eval;
pub mod grid;
pub mod ingest;
pub mod nn;
pub mod numfmt;
pub mod seed;
pub mod synth;
pub mod train;

pub use error::{Error, ErrorClass, Result};
