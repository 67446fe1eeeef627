//! Voxel-scale vascular MR fingerprinting toolkit.
//!
//! Synthesizes binary 3D vascular lattices, simulates pre/post-contrast
//! GESFIDSE echo trains over them (Fourier field solver plus spectral
//! diffusion propagation), assembles quasi-randomly sampled fingerprint
//! dictionaries, and estimates microvascular parameters (BVf, R, SO2, T2)
//! by dictionary matching or Bayesian locally-affine inverse regression.

pub mod config;
pub mod dictionary;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod physics;
pub mod recon;
pub mod rng;

pub use error::{Error, Result};
