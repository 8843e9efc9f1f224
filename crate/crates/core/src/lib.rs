//! Zero-bias autoencoders and the tooling around them.
//!
//! The crate covers the full feature-learning loop on image and video data:
//!
//! * [`preprocessing`]: per-sample contrast normalization and PCA projection
//!   with optional whitening.
//! * [`datasets`]: CIFAR-10 binary batches, patch cropping and a synthetic
//!   rotating-random-dot video generator.
//! * [`activations`]: thresholded (TRec, TLin) and conventional activations.
//! * [`models`]: tied-weight autoencoders with exact gradients for the
//!   zero-bias, denoising and contractive variants, plus K-means.
//! * [`training`]: minibatch SGD with momentum and a two-phase learning rate.
//! * [`evaluation`]: feature extraction under the different inference
//!   schemes, softmax regression and the experiment drivers.
//! * [`analysis`]: active sets, fixed-point residuals, frame operators and
//!   filter visualization.
//!
//! Binary file formats (`ZMAT`, `ZPCA`, `ZAE1`) live in [`formats`].

pub mod activations;
pub mod analysis;
pub mod config;
pub mod datasets;
pub mod error;
pub mod evaluation;
pub mod formats;
pub mod linalg;
pub mod models;
pub mod preprocessing;
pub mod rng;
pub mod training;

pub use error::{Error, Result};

/// Samples in rows, dimensions in columns.
pub type DataMatrix = ndarray::Array2<f64>;
