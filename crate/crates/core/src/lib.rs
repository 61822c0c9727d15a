//! Numerical core for batch-incremental Bayesian triplet sampling.
//!
//! Every class of embedded training data is modelled as a multivariate
//! Gaussian whose mean and covariance are refreshed after each mini-batch
//! with the normal-inverse-Wishart conjugate update. Triplets are then drawn
//! from those class distributions (anchors are real embeddings, positives
//! and negatives are synthetic draws) and fed to a triplet or NCA loss that
//! trains a small fully-connected embedding network.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, configuration
//! and the command line live in the companion `bitrip` crate.

#![cfg_attr(not(test), no_std)]
#![warn(missing_debug_implementations)]

extern crate alloc;

pub mod data;
pub mod distributions;
mod error;
pub mod eval;
pub mod loss;
pub mod matrix;
pub mod mlp;
pub mod rng;
pub mod sampler;
pub mod step;
pub mod tracker;

pub use error::{Error, Result};
pub use matrix::{CholFactor, Matrix, SymMatrix};
pub use rng::Rng;
