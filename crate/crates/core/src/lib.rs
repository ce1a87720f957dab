//! Classification of differential mobility dispersion plots: synthetic data,
//! preprocessing, PCA, classical and tree classifiers, a small neural
//! network kernel, and a cross-validation harness.

pub mod classical;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod fsutil;
pub mod neural;
pub mod pca;
pub mod preprocess;
pub mod render;
pub mod stats;
pub mod synth;
pub mod trees;

pub use error::{Error, Result};
