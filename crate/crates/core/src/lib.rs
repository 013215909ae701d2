pub mod config;
pub mod error;
pub mod eval;
pub mod features;
pub mod geo;
pub mod ingest;
pub mod models;
pub mod pipeline;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
