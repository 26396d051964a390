//! Self-weighted ensembles of from-scratch LeNet classifiers.
//!
//! Members are trained independently with seeded SGD, each one's macro-F1 on
//! a held-out validation split becomes its reliability, and test-time class
//! probabilities are fused either by reliability-weighted summation or by
//! majority vote. The [`experiment`] module repeats that whole procedure over
//! many seeds and tallies which fusion rule wins each trial.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the element type for the common cases.

pub mod data;
pub mod ensemble;
pub mod experiment;
pub mod metrics;
pub mod network;
pub mod rng;
pub mod scalar;
pub mod tensor;

pub use scalar::{Precision, Scalar};
pub use tensor::Tensor;

/// Digit classes in MNIST.
pub const NUM_CLASSES: usize = 10;

pub type Tensor32 = tensor::Tensor<f32>;
pub type Tensor64 = tensor::Tensor<f64>;
pub type Network32 = network::Network<f32>;
pub type Network64 = network::Network<f64>;
pub type Dataset32 = data::Dataset<f32>;
pub type Dataset64 = data::Dataset<f64>;
pub type ScoreMatrix32 = ensemble::ScoreMatrix<f32>;
pub type ScoreMatrix64 = ensemble::ScoreMatrix<f64>;
