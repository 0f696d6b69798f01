//! Vortex-Fourier optical encoding and small-brain reconstruction.
//!
//! The pipeline simulates a phase object illuminated by a Gaussian beam,
//! encoded by one or more vortex lenslets (or a random diffuser), recorded at
//! the back focal plane by a noisy 12-bit camera, and reconstructed by a
//! one-hidden-layer dense network.
//!
//! - [`optics`]: fields, masks, focal-plane propagation
//! - [`encoders`]: per-lenslet frames, crop/downsample, encoded datasets
//! - [`sensor`]: Poisson shot and dark noise, quantization, PSNR
//! - [`dataset`]: IDX images, normalization, augmentation, splits
//! - [`smallbrain`]: the dense network, training, inference benchmark
//! - [`metrics`]: MSE, SSIM, PSNR
//! - [`config`] and [`commands`]: the `vortex` command-line tool

pub mod commands;
pub mod config;
pub mod dataset;
pub mod encoders;
pub mod error;
pub mod metrics;
pub mod optics;
pub mod pgm;
pub mod sensor;
pub mod smallbrain;

pub use error::{Error, Result};
