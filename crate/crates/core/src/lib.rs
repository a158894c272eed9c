//! erasure-lab core: small neural text classifiers plus tools that explain
//! their decisions by erasing parts of the representation.
//!
//! The crate is organized bottom-up:
//!
//! - [`tensor`]: dense `f64` tensors and tape-based reverse-mode autodiff.
//! - [`embeddings`]: vocabulary, word-vector tables, window features, and
//!   input-dimension erasure.
//! - [`data`]: corpus loaders, synthetic task generators with planted
//!   structure, splits, and sentence segmentation.
//! - [`models`]: window-MLP tagger and RNN/LSTM/Bi-LSTM classifiers with
//!   erasure-aware forward passes, training, and a versioned file format.
//! - [`erasure`]: importance scores for input dimensions, hidden units,
//!   and words, plus derived analyses (rankings, histograms, frequency
//!   correlation).
//! - [`rl`]: minimal decision-flipping word sets, both by exhaustive
//!   search and by a REINFORCE-trained erasure policy.
//! - [`report`]: CSV, structured-text, and SVG emitters.

pub mod data;
pub mod embeddings;
pub mod erasure;
pub mod error;
pub mod models;
pub mod parallel;
pub mod report;
pub mod rl;
pub mod tensor;

pub use error::{Error, Result};
