//! Deterministic mixing primitives shared by the crate.
//!
//! Everything that looks random in this crate is a pure function of a 64-bit
//! seed plus a counter, so any artefact can be reproduced from the seed alone.

pub const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finaliser. Bijective on u64, strong avalanche.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The `ctr`-th word of the counter-based stream rooted at `seed`.
#[inline]
pub fn stream(seed: u64, ctr: u64) -> u64 {
    mix64(seed.wrapping_add(ctr.wrapping_add(1).wrapping_mul(GOLDEN)))
}

/// FNV-1a over a byte string; used to fold names into seeds.
#[inline]
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Small sequential generator for tests, fixtures and subsampling decisions.
#[derive(Debug, Clone)]
pub struct SplitMix {
    state: u64,
}

impl SplitMix {
    pub fn new(seed: u64) -> Self {
        SplitMix { state: seed }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix64(self.state)
    }

    /// Uniform value in `[0, bound)`. `bound` must be nonzero.
    #[inline]
    pub fn next_below(&mut self, bound: u64) -> u64 {
        // Multiply-shift reduction; bias is negligible for bound << 2^64.
        ((self.next_u64() as u128 * bound as u128) >> 64) as u64
    }

    /// Uniform f64 in `[0, 1)`.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stream_is_counter_addressable() {
        let a: Vec<u64> = (0..8).map(|i| stream(42, i)).collect();
        let b: Vec<u64> = (0..8).map(|i| stream(42, i)).collect();
        assert_eq!(a, b);
        assert_ne!(stream(42, 0), stream(43, 0));
    }

    #[test]
    fn next_below_stays_in_range() {
        let mut rng = SplitMix::new(7);
        for _ in 0..1000 {
            assert!(rng.next_below(13) < 13);
        }
    }
}
