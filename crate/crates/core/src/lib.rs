//! Statistics-transfer data augmentation for unbalanced few-shot
//! classification in feature space.
//!
//! The library estimates few-shot class means with a learned regressor,
//! clusters classes into balanced superclasses whose pooled mean and
//! per-dimension deviation are inherited by their few-shot children, and
//! meta-trains a conditional generator end-to-end through a downstream
//! classifier so that augmenting sparse support sets improves episodic
//! accuracy.

pub mod baselines;
pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod hierarchy;
pub mod metagen;
pub mod numerics;
pub mod projection;
pub mod regressor;
pub mod report;

pub use error::{Error, Result};
