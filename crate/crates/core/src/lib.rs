//! Troubleshooting component-based ML pipelines by simulating component
//! fixes with (simulated or live) annotators and measuring their effect on
//! the final output.

pub mod analysis;
pub mod crowd;
pub mod demo;
pub mod error;
pub mod evaluation;
pub mod events;
pub mod fix;
pub mod metrics;
pub mod pipeline;
pub mod project;
pub mod rng;
pub mod service;

pub use error::{Error, Result};
