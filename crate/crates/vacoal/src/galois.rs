//! Degree-64 GF(2) feedback polynomials and the per-block LFSR diffuser.
//!
//! Each block owns one [`BlockDiffuser`]: a feedback polynomial, a nonzero
//! 64-bit seed and an address width `m`. Diffusion runs the LFSR in Galois
//! (internal-XOR) configuration, CRC-style with right shifts: inject a
//! segment byte, step eight times, repeat; the address is the low `m` bits
//! of the final state. The remainder is all that is ever materialised.
//!
//! Polynomials are *not* checked for primitivity. A uniformly sampled
//! 64-bit integer with its degree-0 coefficient forced to 1 (the degree-64
//! coefficient is implicit) almost always mixes well enough; deviations
//! show up as avalanche statistics outside the ideal 50% band and are
//! absorbed by majority voting downstream. [`BlockDiffuser::avalanche_stats`]
//! measures that band, and [`BlockDiffuser::is_avalanche_suspect`] flags
//! pathological polynomials.

use crate::error::Error;
use crate::rng::{mix64, stream, SplitMix, GOLDEN};
use crate::Result;

/// GF(2) feedback polynomial: bit `i` is the coefficient of `x^i`; the
/// `x^64` coefficient is implicit and always 1, and bit 0 is forced to 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FeedbackPolynomial(u64);

impl FeedbackPolynomial {
    /// Interprets a sampled 64-bit integer as a polynomial, forcing the
    /// degree-0 coefficient.
    pub fn from_raw(bits: u64) -> Self {
        FeedbackPolynomial(bits | 1)
    }

    pub fn coeffs(self) -> u64 {
        self.0
    }
}

/// Turns one uniform 64-bit draw into a valid feedback polynomial.
pub fn sample_polynomial(rng_state: u64) -> FeedbackPolynomial {
    FeedbackPolynomial::from_raw(rng_state)
}

/// One block's diffuser: polynomial, seed, address width and the segment
/// width it accepts.
#[derive(Debug, Clone)]
pub struct BlockDiffuser {
    poly: FeedbackPolynomial,
    seed: u64,
    m: u32,
    segment_bits: usize,
}

impl BlockDiffuser {
    pub fn new(poly: FeedbackPolynomial, seed: u64, m: u32, segment_bits: usize) -> Result<Self> {
        if seed == 0 {
            return Err(Error::Config("diffuser seed must be nonzero".into()));
        }
        if !(1..=32).contains(&m) {
            return Err(Error::Config(format!("address width m={m} out of 1..=32")));
        }
        if segment_bits == 0 {
            return Err(Error::InvalidDimension("segment must be non-empty".into()));
        }
        Ok(BlockDiffuser {
            poly,
            seed,
            m,
            segment_bits,
        })
    }

    pub fn poly(&self) -> FeedbackPolynomial {
        self.poly
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn segment_bits(&self) -> usize {
        self.segment_bits
    }

    pub fn segment_bytes(&self) -> usize {
        self.segment_bits.div_ceil(8)
    }

    /// Diffuses a packed segment into an address below `2^m`.
    pub fn diffuse(&self, segment: &[u8]) -> Result<u32> {
        if segment.len() != self.segment_bytes() {
            return Err(Error::Dimension {
                expected: self.segment_bytes(),
                got: segment.len(),
            });
        }
        let mut state = self.seed;
        let taps = self.poly.0;
        for &byte in segment {
            state ^= byte as u64;
            for _ in 0..8 {
                state = if state & 1 == 1 {
                    (state >> 1) ^ taps
                } else {
                    state >> 1
                };
            }
        }
        Ok((state & ((1u64 << self.m) - 1)) as u32)
    }

    /// Mean fraction of address bits flipped by a single-input-bit flip,
    /// over `trials` random segments. Deterministic in the diffuser.
    ///
    /// The flip pattern of a Galois LFSR is a linear function of the flip
    /// position alone, so for one fixed polynomial this converges to a
    /// per-polynomial constant with a few percent of spread across
    /// polynomials. [`avalanche_ensemble`] averages that spread away.
    pub fn avalanche_stats(&self, trials: usize) -> Result<f64> {
        if trials == 0 {
            return Err(Error::EmptyInput("avalanche needs trials > 0"));
        }
        let mut rng = SplitMix::new(mix64(self.seed ^ self.poly.0.rotate_left(17)));
        let mut total_flips = 0u64;
        for _ in 0..trials {
            total_flips += self.avalanche_trial(&mut rng)? as u64;
        }
        Ok(total_flips as f64 / (trials as u64 * self.m as u64) as f64)
    }

    fn avalanche_trial(&self, rng: &mut SplitMix) -> Result<u32> {
        let mut seg = vec![0u8; self.segment_bytes()];
        for b in seg.iter_mut() {
            *b = rng.next_u64() as u8;
        }
        mask_segment_pad(&mut seg, self.segment_bits);
        let flip = rng.next_below(self.segment_bits as u64) as usize;
        let mut flipped = seg.clone();
        flipped[flip / 8] ^= 1 << (flip % 8);
        Ok((self.diffuse(&seg)? ^ self.diffuse(&flipped)?).count_ones())
    }

    /// True when measured avalanche falls outside `[0.45, 0.55]`.
    pub fn is_avalanche_suspect(&self, trials: usize) -> Result<bool> {
        let mean = self.avalanche_stats(trials)?;
        Ok(!(0.45..=0.55).contains(&mean))
    }
}

fn mask_segment_pad(segment: &mut [u8], bits: usize) {
    let tail = bits % 8;
    if tail != 0 {
        let last = segment.len() - 1;
        segment[last] &= (1u8 << tail) - 1;
    }
}

/// Mean flip fraction with a fresh random polynomial and seed per trial.
/// This is the statistical form of the 50%-inversion property; per-trial
/// resampling removes the per-polynomial spread of
/// [`BlockDiffuser::avalanche_stats`].
pub fn avalanche_ensemble(m: u32, segment_bits: usize, trials: usize, seed: u64) -> Result<f64> {
    if trials == 0 {
        return Err(Error::EmptyInput("avalanche needs trials > 0"));
    }
    let mut rng = SplitMix::new(seed);
    let mut total_flips = 0u64;
    for t in 0..trials as u64 {
        let poly = sample_polynomial(stream(seed, 2 * t));
        let lfsr_seed = stream(seed, 2 * t + 1) | 1;
        let d = BlockDiffuser::new(poly, lfsr_seed, m, segment_bits)?;
        total_flips += d.avalanche_trial(&mut rng)? as u64;
    }
    Ok(total_flips as f64 / (trials as u64 * m as u64) as f64)
}

/// The per-block diffuser array. Fully determined by
/// `(master_seed, blocks, m, segment_bits)`; polynomials and seeds are
/// re-derived rather than stored when the bank is persisted.
#[derive(Debug, Clone)]
pub struct DiffuserBank {
    diffusers: Vec<BlockDiffuser>,
    master_seed: u64,
}

impl DiffuserBank {
    pub fn new(master_seed: u64, blocks: usize, m: u32, segment_bits: usize) -> Result<Self> {
        if blocks == 0 {
            return Err(Error::Config("block count must be positive".into()));
        }
        if !segment_bits.is_multiple_of(8) {
            return Err(Error::InvalidDimension(format!(
                "segment bits must be a multiple of 8, got {segment_bits}"
            )));
        }
        let mut diffusers = Vec::with_capacity(blocks);
        for b in 0..blocks as u64 {
            let poly = sample_polynomial(stream(master_seed, 2 * b));
            let mut seed = stream(master_seed, 2 * b + 1);
            if seed == 0 {
                seed = GOLDEN;
            }
            diffusers.push(BlockDiffuser::new(poly, seed, m, segment_bits)?);
        }
        Ok(DiffuserBank {
            diffusers,
            master_seed,
        })
    }

    /// Bank for hypervectors of `total_bits` split into `blocks` segments.
    pub fn for_dimensions(
        master_seed: u64,
        blocks: usize,
        m: u32,
        total_bits: usize,
    ) -> Result<Self> {
        if blocks == 0 || total_bits == 0 || !total_bits.is_multiple_of(blocks) {
            return Err(Error::InvalidDimension(format!(
                "vector length {total_bits} is not divisible into {blocks} blocks"
            )));
        }
        Self::new(master_seed, blocks, m, total_bits / blocks)
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn blocks(&self) -> usize {
        self.diffusers.len()
    }

    pub fn m(&self) -> u32 {
        self.diffusers[0].m()
    }

    pub fn segment_bits(&self) -> usize {
        self.diffusers[0].segment_bits()
    }

    pub fn segment_bytes(&self) -> usize {
        self.diffusers[0].segment_bytes()
    }

    pub fn total_bits(&self) -> usize {
        self.blocks() * self.segment_bits()
    }

    pub fn diffuser(&self, block: usize) -> &BlockDiffuser {
        &self.diffusers[block]
    }

    pub fn diffuse(&self, block: usize, segment: &[u8]) -> Result<u32> {
        self.diffusers[block].diffuse(segment)
    }
}
