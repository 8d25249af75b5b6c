//! Online continual learning over fixed feature vectors: streaming
//! learners, seeded stream orderings, metrics and an experiment harness.

pub mod error;
pub mod feature_store;
pub mod harness;
pub mod learners;
pub mod metrics;
pub mod rng;
pub mod stream_orderings;
pub mod streaming_stats;

pub use error::{Error, Result};
