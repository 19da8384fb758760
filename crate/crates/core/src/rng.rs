//! Seeding scheme.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed by a
//! 64-bit master seed. Independent consumers (signal photons, dark counts,
//! microcell assignment, amplitude dispersion, electronic noise, ...) read
//! from distinct ChaCha stream ids of the same key, so adding or removing one
//! consumer never perturbs another. Sweep points derive a child seed from the
//! master seed and the point index, which keeps results independent of the
//! order or thread on which points are evaluated.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Stream ids reserved for the simulation stages.
pub mod stream {
    pub const SIGNAL: u64 = 1;
    pub const DARK: u64 = 2;
    pub const MICROCELL: u64 = 3;
    pub const AMPLITUDE: u64 = 4;
    pub const NOISE: u64 = 5;
    pub const COUNTS: u64 = 6;
    pub const CHILD: u64 = 0xC0FFEE;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RngSeed(pub u64);

impl RngSeed {
    /// Generator for one named stream of this seed.
    pub fn rng(self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0);
        rng.set_stream(stream);
        rng
    }

    /// Child seed for sweep point `index`.
    pub fn child(self, index: u64) -> RngSeed {
        let mut rng = self.rng(stream::CHILD);
        rng.set_word_pos(u128::from(index) * 2);
        RngSeed(rng.next_u64())
    }
}

impl Default for RngSeed {
    fn default() -> Self {
        RngSeed(0x5EED)
    }
}

impl From<u64> for RngSeed {
    fn from(v: u64) -> Self {
        RngSeed(v)
    }
}
