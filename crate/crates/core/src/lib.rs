//! Shift-invariant k-means and convolutional dictionary learning, cast as
//! sparse representation problems, plus the feature extraction and linear
//! classification pipeline used to benchmark them.

pub mod classifier;
pub mod clustering;
pub mod combinatorics;
pub mod conv;
pub mod datasets;
pub mod dictionary;
pub mod distances;
pub mod error;
pub mod features;
mod fft;
pub mod rng;
pub mod sparse_coding;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use dictionary::Dictionary;
pub use rng::{seeded_rng, SeededRng};
pub use tensor::{Offset, Tensor};
