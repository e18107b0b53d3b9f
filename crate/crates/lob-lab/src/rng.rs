//! Counter-based random number streams.
//!
//! Every Monte Carlo path owns its own stream, derived from `(seed, stream id)`
//! by a splitmix-style mix, so results are bit-identical no matter how paths
//! are scheduled across workers.

use rand::rand_core::{impls, RngCore};

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A stateless-keyed counter stream: output k is `mix(key + k*GOLDEN)`.
#[derive(Debug, Clone)]
pub struct PathStream {
    key: u64,
    ctr: u64,
}

impl PathStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let key = mix(mix(seed.wrapping_add(GOLDEN)) ^ mix(stream.wrapping_mul(GOLDEN)));
        PathStream { key, ctr: 0 }
    }

    /// Stream id for path `path` inside a named block, so one run can use
    /// several independent families of streams from a single seed.
    pub fn for_path(seed: u64, block: u64, path: u64) -> Self {
        Self::new(seed, (block << 40) ^ path)
    }
}

impl RngCore for PathStream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.ctr = self.ctr.wrapping_add(GOLDEN);
        mix(self.ctr ^ self.key)
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        impls::fill_bytes_via_next(self, dest)
    }
}
