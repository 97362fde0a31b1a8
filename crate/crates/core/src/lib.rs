//! churnkit: a churn-prediction toolkit for mobile-game telemetry.
//!
//! Pipeline: event-log ingestion → windowed churn labeling → temporal +
//! aggregate feature extraction → seven comparable classifiers (random
//! forest, feed-forward, LSTM, and four hybrid sequential/static networks)
//! → stratified cross-validated evaluation. A seeded synthetic generator
//! with a planted context-dependent churn signal makes the whole pipeline
//! testable end to end.

pub mod architectures;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod eventlog;
pub mod features;
pub mod forest;
pub mod labeling;
pub mod nn;
pub mod profile;
pub mod synth;

pub use error::{Error, Result};
