//! Character-level dense feature extraction and Bi-LSTM(-CRF) sequence tagging.
//!
//! The pipeline: words are split into a fixed number of pieces driven by
//! corpus n-gram statistics, each piece is vectorized as a bag of characters
//! plus a character-order class, a word-length one-hot is appended, and the
//! whole thing is normalized into a sparse feature vector. A small dense
//! layer turns that into a dense character feature which is concatenated
//! with a word embedding and fed to a residual Bi-LSTM stack with a softmax
//! or CRF head.

pub mod checkpoint;
pub mod corpus;
pub mod crf;
pub mod error;
pub mod featurizer;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod synth;
pub mod train;

mod scalar;

pub use error::{CoreError, Result};
pub use scalar::Scalar;
