//! Learned posterior inference over discrete Bayesian networks.
//!
//! The crate bundles a BIF reader, an exact variable-elimination oracle,
//! samplers for training and test data, a small dense neural-network engine,
//! the generative models (EAR, EARA, NC, RBM, WGAN, CGAN, VAE, CVAE) and the
//! AD / KL / ACC evaluation metrics.

pub mod bn;
pub mod encoding;
pub mod error;
pub mod exact;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod rng;
pub mod sampling;

pub use error::{Error, Result};
