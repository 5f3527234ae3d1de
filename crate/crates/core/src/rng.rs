//! Seed schema.
//!
//! Every random draw in the workspace comes from `stream(seed, id)`: ChaCha8
//! keyed by the seed, with the stream id selecting an independent keystream.
//! Consumers use the named ids below so that, for example, the noise wrapper
//! never perturbs the oracle's batch selection.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub const TRAIN_DATA: u64 = 1;
pub const TEST_DATA: u64 = 2;
pub const ORACLE: u64 = 3;
pub const LABEL_NOISE: u64 = 4;
pub const SGD_INIT: u64 = 5;
pub const SGD_PAIRS: u64 = 6;
pub const FEATURES: u64 = 7;
pub const REVEAL: u64 = 8;
pub const MISSING: u64 = 9;
pub const CORRUPT: u64 = 10;
pub const AUGMENT: u64 = 11;
pub const CLUSTERING: u64 = 12;
const TRIALS: u64 = 1 << 32;

pub fn stream(seed: u64, id: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Seed for trial `trial` of a run with base seed `seed`.
pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    stream(seed, TRIALS + trial).next_u64()
}

/// Position of a generator inside its keystream, enough to resume it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct RngPosition {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngPosition {
    pub fn of(rng: &Rng) -> Self {
        RngPosition {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}
