//! Facial expression recognition from 68-point landmarks and wrinkle
//! texture.
//!
//! The pipeline: pose-normalize the landmarks ([`geometry`]), turn them and
//! a horizontal-edge map of the face ([`imaging`]) into a 32-value
//! [`features::FeatureVector`], and classify it with a batch-normalized MLP
//! ([`mlp`]). [`evaluation`] runs K-fold cross-validation over feature files
//! produced by [`data`].

pub mod data;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod geometry;
pub mod imaging;
pub mod mlp;
pub mod synthetic;

pub use error::{FerError, Result};
