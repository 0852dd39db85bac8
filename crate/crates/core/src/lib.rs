//! Learned quality-weighted fusion of multi-temporal satellite image stacks,
//! and cloud detection derived from the learned quality masks.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common choices.
//!
//! - [`tensor`]: tensors, reverse-mode autodiff, optimizers, checkpoints
//! - [`nn`]: the quality U-Net and the segmentation network
//! - [`data`]: synthetic multi-image datasets, tiles, NetPBM I/O
//! - [`fusion`]: fusion and end-to-end training from land-cover labels
//! - [`detect`]: threshold, calibrated and fine-tuned cloud detectors
//! - [`eval`]: metrics, benchmark reports and the training-size sweep

pub mod data;
pub mod detect;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod nn;
pub mod scalar;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor32 = tensor::Tensor<f32>;
pub type Tensor64 = tensor::Tensor<f64>;
pub type Graph32 = tensor::Graph<f32>;
pub type Graph64 = tensor::Graph<f64>;
pub type QualityNet32 = nn::QualityNet<f32>;
pub type QualityNet64 = nn::QualityNet<f64>;
pub type SegNet32 = nn::SegNet<f32>;
pub type SegNet64 = nn::SegNet<f64>;
