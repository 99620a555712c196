//! Padé-derived asymmetric losses for long-tailed classification, with
//! the supporting numerics, synthetic data, training loop and metrics.

pub mod datagen;
pub mod error;
pub mod gradcheck;
pub mod losses;
pub mod metrics;
pub mod numeric;
pub mod pade;
pub mod trainer;

pub use error::{Error, Result};
