//! Core numerics for positive active learning.
//!
//! A [`graph::SimilarityGraph`] records which pairs of samples are known to be
//! semantically related. Oracles in [`oracles`] grow that graph from cheap
//! same-class questions, [`losses`] scores an embedding against it, and
//! [`kernel`] turns it into an embedding in closed form through the top
//! spectral decomposition of `G - lambda * K^-1`. [`probe`] measures how well a
//! linear classifier can read the labels back out of an embedding.
//!
//! Everything here is deterministic given a seed. Randomness flows through
//! [`rng::stream`], which pins ChaCha8 with a `(seed, stream)` schema so that
//! independent consumers never share a sequence.


pub mod datasets;
pub mod error;
pub mod graph;
pub mod kernel;
pub mod labels;
pub mod linalg;
pub mod losses;
pub mod oracles;
pub mod parallel;
pub mod probe;
pub mod rng;
pub mod sgd;

pub use error::{PalError, Result};
pub use graph::{EntryState, SimilarityGraph};
pub use labels::LabelMatrix;
pub use losses::Embedding;
