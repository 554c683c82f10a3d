//! Counter-style random substreams.
//!
//! Every random draw in a run is taken from a stream addressed by a path of
//! integer tags (run, stage, phase, particle, ...) hashed together with the
//! master seed. Results therefore depend only on the seed and the path, never
//! on the order in which work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Generator used for every substream.
pub type StreamRng = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A node in the tree of substreams rooted at a master seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedTree(u64);

impl SeedTree {
    pub fn new(master_seed: u64) -> Self {
        SeedTree(splitmix64(master_seed ^ 0x5eed_0f_7e_3d_9a_11))
    }

    pub fn child(self, tag: u64) -> Self {
        SeedTree(splitmix64(self.0 ^ splitmix64(tag.wrapping_mul(0xd6e8_feb8_6659_fd93))))
    }

    pub fn path(self, tags: &[u64]) -> Self {
        tags.iter().fold(self, |node, &t| node.child(t))
    }

    pub fn key(self) -> u64 {
        self.0
    }

    /// Fresh generator positioned at the start of this node's stream.
    pub fn rng(self) -> StreamRng {
        StreamRng::seed_from_u64(self.0)
    }
}

/// Stable 64-bit tag for a string label (FNV-1a), used to address streams by name.
pub fn label_tag(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
