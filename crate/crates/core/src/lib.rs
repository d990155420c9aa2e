//! Plausibility constraints for attention-based bi-LSTM text classifiers.
//!
//! The crate covers the full pipeline: corpus ingestion into a canonical
//! token format, heuristic rationale maps, a bi-LSTM + attention network with
//! hand-written backpropagation, the composite training objective with its
//! three attention constraints, rationale evaluation metrics, and a
//! seed/λ sweep runner with a resumable result store.

pub mod corpus;
pub mod error;
pub mod heuristic;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod objective;
pub mod render;
pub mod report;
pub mod trainer;

pub use error::{Error, Result};
