//! Graph-level anomaly detection with GIN encoders, mean and MMD pooling,
//! Deep-SVDD training, and label-free selection over a pool of candidates.

pub mod encoder;
pub mod error;
pub mod features;
pub mod graph;
pub mod grid;
pub mod metrics;
pub mod mixhop;
pub mod numkit;
pub mod objective;
pub mod par;
pub mod pipeline;
pub mod pooling;
pub mod seed;
pub mod selection;
pub mod split;
pub mod trainer;
pub mod tu;

pub use error::{Error, Result};
