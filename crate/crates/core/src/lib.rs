pub mod batch;
pub mod belief_map;
pub mod cli;
pub mod config;
pub mod detection;
pub mod embedding;
pub mod error;
pub mod exec;
pub mod exploration;
pub mod fusion;
pub mod grid;
pub mod metrics;
pub mod pgm;
pub mod pipeline;
pub mod planner;
pub mod query_pipeline;
pub mod remote;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
