//! Frequency-domain complex-valued convolutional networks.
//!
//! Images are diced into `K x K` patches, each patch is taken to the
//! frequency domain with a 2D DFT, and the resulting complex spectra are
//! classified by a residual network built from complex convolution,
//! component-wise complex ReLU and whitening complex batch normalization.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`]: split real/imaginary dense tensors and the [`Real`] scalar trait.
//! * [`spectral`]: naive DFT, radix-2 FFT, patch partition/shuffle and the spectral cache.
//! * [`layers`]: complex layers with forward and reverse-mode passes.
//! * [`network`]: residual blocks, the classifier and checkpoints.
//! * [`training`]: loss, SGD, augmentation, the training loop and sweeps.
//! * [`metrics`]: confusion matrices and weighted/macro scores.
//! * [`dataset`]: folder ingestion, stratified splits, resizing and the synthetic generator.

pub mod dataset;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod metrics;
pub mod network;
pub mod rng;
pub mod spectral;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::{ComplexTensor, Precision, Real, Shape, Tensor};
