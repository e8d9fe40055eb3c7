//! Gaussian stability, persistence and decision-boundary geometry for
//! small fully connected classifiers.

pub mod attacks;
pub mod boundary;
pub mod classifier;
pub mod data;
pub mod error;
pub mod experiments;
pub mod manifold;
pub mod nn;
pub mod rng;
pub mod stability;

pub use classifier::Classifier;
pub use error::{Error, Result};
