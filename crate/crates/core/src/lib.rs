//! Stochastic particle methods for Smoluchowski coagulation and for the
//! sensitivity of its solution to a kernel parameter.

pub mod cli;
pub mod ensemble;
pub mod error;
pub mod exact_driver;
pub mod kernel;
pub mod ml_driver;
pub mod oracle;
pub mod rng;
pub mod stats;
pub mod weighted_index_tree;

mod proposal;

pub use error::{Error, Result};
pub use stats::SensitivityEstimate;
