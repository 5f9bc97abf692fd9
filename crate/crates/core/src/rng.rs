//! Deterministic stream derivation.
//!
//! Every random quantity is drawn from a ChaCha8 stream whose seed is a pure
//! function of the master seed and a path of labels (family, grid point,
//! replicate, ...). Results therefore never depend on the worker count or on
//! the order in which workers pick up replicates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// A node in the stream tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    seed: u64,
}

impl StreamKey {
    pub fn new(master_seed: u64) -> Self {
        Self {
            seed: splitmix64(master_seed ^ 0x6a09_e667_f3bc_c908),
        }
    }

    /// Child key for `label`; distinct labels give independent streams.
    pub fn child(self, label: u64) -> Self {
        Self {
            seed: splitmix64(self.seed.rotate_left(17) ^ splitmix64(label.wrapping_add(0x9e37))),
        }
    }

    /// Child key for a string label (family names, stage names).
    pub fn child_str(self, label: &str) -> Self {
        // FNV-1a
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in label.as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        self.child(h)
    }

    pub fn rng(self) -> Stream {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    pub fn raw(self) -> u64 {
        self.seed
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
