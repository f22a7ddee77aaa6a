//! Rank-then-calibrate regression.
//!
//! A scorer is trained on a scale-free ranking objective (weighted pairwise
//! log-sigmoid losses or a softrank Gini-covariance loss), then an isotonic
//! map fitted on the training scores restores the target scale. The crate
//! also ships the synthetic data generators, the same-architecture MSE
//! baseline, rank-correlation metrics and a benchmark harness.

pub mod bench;
pub mod data;
pub mod dgp;
pub mod error;
pub mod isotonic;
pub mod losses;
pub mod matrix;
pub mod metrics;
pub mod pipeline;
pub mod ranks;
pub mod rng;
pub mod scorer;

pub use error::{CairoError, Result};
pub use matrix::Matrix;
