//! Discrete-event simulation of batch scheduling on a cluster whose storage
//! nodes host per-job burst buffers.

pub mod engine;
pub mod error;
pub mod metrics;
pub mod optimizers;
pub mod platform;
pub mod schedulers;
pub mod workload;

pub use error::{Error, Result};
