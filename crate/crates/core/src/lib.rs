//! Footwork classification over 2D skeleton sequences with temporal
//! convolutional networks: tensor math and autodiff, TCN blocks, pose
//! preprocessing, the FenceNet/BiFenceNet model family, training, and
//! leave-one-fencer-out evaluation.

pub mod error;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub mod dataset;
pub mod models;
pub mod tcn;
pub mod training;
pub mod evaluation;
