//! Analytic score-distribution optimization for multi-level quality scoring:
//! closed-form KL-regularized teachers, soft-target training, metrics and
//! annotation tooling.

pub mod analytic;
pub mod annotations;
pub mod config;
pub mod error;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod optim;
pub mod oracle;
pub mod pipeline;
pub mod rewards;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
