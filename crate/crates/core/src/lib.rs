//! Latent-state fingerprints from in-home activity event logs.
//!
//! The pipeline turns timestamped sensor events into per-participant
//! behavioral fingerprints: events are rectified into 20-minute day strings,
//! embedded, projected to 2D, clustered into latent states, and summarized as
//! the PageRank vector of a proximity-based transition matrix. Cohort-level
//! tooling compares participants by fingerprint similarity and clinical
//! features.

pub mod clustering;
pub mod cohort;
pub mod data_model;
pub mod embedding;
pub mod error;
pub mod hashutil;
pub mod matrix;
pub mod pipeline;
pub mod preprocess;
pub mod projection;
pub mod stateflow;
pub mod svg;
pub mod synthgen;
pub mod triplets;

pub use error::{Error, Result};
