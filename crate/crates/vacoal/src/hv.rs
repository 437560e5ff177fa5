//! Binary hypervectors and the algebra on them.
//!
//! A [`Hypervector`] is an immutable L-bit binary vector. Bit `i` lives at
//! bit `i % 8` (LSB first) of byte `i / 8`; trailing pad bits are zero. The
//! packing convention is load-bearing: block segments are compared
//! byte-for-byte by the rescue pipeline, so one fixed layout is required.
//!
//! Operations:
//!
//! - [`bind`]: `A XOR rotl1(B)`. Self-inverse in the second operand, so
//!   unbinding is just rebinding: `bind(bind(A, B), B) == A` bit-exactly.
//!   The rotation makes the product role/filler asymmetric.
//! - [`bundle`]: bitwise majority with a fixed tie-break vector, preserving
//!   similarity to every member.
//! - [`hamming`]: distance and similarity; `D - 2*distance` equals the
//!   inner product of the corresponding bipolar (+1/-1) vectors.
//!
//! Token hypervectors come from a [`TokenCodebook`]: the bits for a name are
//! a pure function of `(seed, name, L)`, via a counter-based stream, so the
//! codebook is reproducible and insertion-order independent.

use std::collections::HashMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::{Arc, RwLock};

use crate::error::Error;
use crate::rng::{fnv1a64, mix64, stream};
use crate::Result;

/// Fixed-length packed binary vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Hypervector {
    bits: Box<[u8]>,
    len: usize,
}

impl Hypervector {
    /// All-zero vector of `len` bits.
    pub fn zeros(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidDimension("length must be positive".into()));
        }
        Ok(Hypervector {
            bits: vec![0u8; len.div_ceil(8)].into_boxed_slice(),
            len,
        })
    }

    /// Builds a vector from packed bytes. Pad bits in the last byte are
    /// cleared rather than rejected.
    pub fn from_bytes(bytes: Vec<u8>, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidDimension("length must be positive".into()));
        }
        if bytes.len() != len.div_ceil(8) {
            return Err(Error::Dimension {
                expected: len.div_ceil(8),
                got: bytes.len(),
            });
        }
        let mut hv = Hypervector {
            bits: bytes.into_boxed_slice(),
            len,
        };
        hv.mask_pad();
        Ok(hv)
    }

    /// Deterministic pseudorandom vector from a 64-bit seed.
    pub fn from_seed(seed: u64, len: usize) -> Result<Self> {
        let mut bytes = vec![0u8; len.div_ceil(8)];
        for (w, chunk) in bytes.chunks_mut(8).enumerate() {
            let word = stream(seed, w as u64).to_le_bytes();
            chunk.copy_from_slice(&word[..chunk.len()]);
        }
        Self::from_bytes(bytes, len)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false // length is always positive
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bits
    }

    pub fn bit(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        (self.bits[i / 8] >> (i % 8)) & 1 == 1
    }

    /// Returns a copy with bit `i` flipped.
    pub fn with_flipped_bit(&self, i: usize) -> Self {
        debug_assert!(i < self.len);
        let mut out = self.clone();
        out.bits[i / 8] ^= 1 << (i % 8);
        out
    }

    /// Bitwise complement (pad bits stay zero).
    pub fn not(&self) -> Self {
        let mut out = self.clone();
        for b in out.bits.iter_mut() {
            *b = !*b;
        }
        out.mask_pad();
        out
    }

    pub fn count_ones(&self) -> u64 {
        self.bits.iter().map(|b| b.count_ones() as u64).sum()
    }

    /// The bytes of block `b` when the vector is cut into segments of
    /// `seg_bytes` bytes each.
    pub fn segment(&self, block: usize, seg_bytes: usize) -> &[u8] {
        &self.bits[block * seg_bytes..(block + 1) * seg_bytes]
    }

    /// Circular left rotation by one bit: out bit `i` = in bit `(i+1) % L`.
    pub fn rotl1(&self) -> Self {
        let mut out = self.clone();
        rotl1_into(&self.bits, self.len, &mut out.bits);
        out
    }

    fn mask_pad(&mut self) {
        let tail = self.len % 8;
        if tail != 0 {
            let last = self.bits.len() - 1;
            self.bits[last] &= (1u8 << tail) - 1;
        }
    }
}

fn rotl1_into(src: &[u8], len: usize, dst: &mut [u8]) {
    let n = src.len();
    if len.is_multiple_of(8) {
        for j in 0..n {
            dst[j] = (src[j] >> 1) | ((src[(j + 1) % n] & 1) << 7);
        }
    } else {
        // Slow path for unaligned lengths.
        for b in dst.iter_mut() {
            *b = 0;
        }
        for i in 0..len {
            let s = (i + 1) % len;
            if (src[s / 8] >> (s % 8)) & 1 == 1 {
                dst[i / 8] |= 1 << (i % 8);
            }
        }
    }
}

fn check_same_len(a: &Hypervector, b: &Hypervector) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(())
}

/// `A XOR rotl1(B)`. Rebinding with the same second operand recovers the
/// first operand exactly.
pub fn bind(a: &Hypervector, b: &Hypervector) -> Result<Hypervector> {
    check_same_len(a, b)?;
    let mut out = a.clone();
    let n = b.bits.len();
    if b.len.is_multiple_of(8) {
        for j in 0..n {
            out.bits[j] ^= (b.bits[j] >> 1) | ((b.bits[(j + 1) % n] & 1) << 7);
        }
    } else {
        let rot = b.rotl1();
        for j in 0..n {
            out.bits[j] ^= rot.bits[j];
        }
    }
    out.mask_pad();
    Ok(out)
}

/// Bitwise majority of `vs`. An exact tie at a bit position copies that bit
/// from `tiebreak`.
pub fn bundle(vs: &[&Hypervector], tiebreak: &Hypervector) -> Result<Hypervector> {
    let first = *vs
        .first()
        .ok_or(Error::EmptyInput("bundle of no vectors"))?;
    for v in vs {
        check_same_len(first, v)?;
    }
    check_same_len(first, tiebreak)?;
    if vs.len() == 1 {
        return Ok(first.clone());
    }

    let len = first.len();
    let mut counts = vec![0u32; len];
    for v in vs {
        for (j, &byte) in v.bits.iter().enumerate() {
            let base = j * 8;
            let top = (len - base).min(8);
            for k in 0..top {
                counts[base + k] += ((byte >> k) & 1) as u32;
            }
        }
    }

    let k = vs.len() as u32;
    let mut out = Hypervector::zeros(len)?;
    for (i, &ones) in counts.iter().enumerate() {
        let set = match (2 * ones).cmp(&k) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Equal => tiebreak.bit(i),
            std::cmp::Ordering::Less => false,
        };
        if set {
            out.bits[i / 8] |= 1 << (i % 8);
        }
    }
    Ok(out)
}

/// Hamming distance and similarity `1 - distance / L`.
pub fn hamming(a: &Hypervector, b: &Hypervector) -> Result<(u64, f64)> {
    check_same_len(a, b)?;
    let mut dist = 0u64;
    for (x, y) in a.bits.iter().zip(b.bits.iter()) {
        dist += (x ^ y).count_ones() as u64;
    }
    Ok((dist, 1.0 - dist as f64 / a.len() as f64))
}

/// Similarity alone.
pub fn similarity(a: &Hypervector, b: &Hypervector) -> Result<f64> {
    Ok(hamming(a, b)?.1)
}

/// Name of the reserved tie-break token.
pub const TIEBREAK_TOKEN: &str = "__tiebreak__";

const CODEBOOK_MAGIC: &[u8; 8] = b"VACBOOK1";

/// Deterministic token store: `(seed, name, L)` always yields the same
/// hypervector, whatever the lookup order. Reads are concurrent; inserts
/// take the write lock.
#[derive(Debug)]
pub struct TokenCodebook {
    seed: u64,
    dim: usize,
    entries: RwLock<HashMap<String, Arc<Hypervector>>>,
}

impl TokenCodebook {
    pub fn new(seed: u64, dim: usize) -> Result<Self> {
        check_token_dim(dim)?;
        Ok(TokenCodebook {
            seed,
            dim,
            entries: RwLock::new(HashMap::new()),
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The token for `name`, generating and caching it on first use.
    pub fn token(&self, name: &str) -> Arc<Hypervector> {
        if let Some(hv) = self.entries.read().unwrap().get(name) {
            return Arc::clone(hv);
        }
        let hv = Arc::new(generate_token_unchecked(name, self.dim, self.seed));
        let mut map = self.entries.write().unwrap();
        Arc::clone(map.entry(name.to_string()).or_insert(hv))
    }

    /// The fixed tie-break vector used by bundling helpers.
    pub fn tiebreak(&self) -> Arc<Hypervector> {
        self.token(TIEBREAK_TOKEN)
    }

    /// Bundles with this codebook's tie-break vector.
    pub fn bundle(&self, vs: &[&Hypervector]) -> Result<Hypervector> {
        bundle(vs, &self.tiebreak())
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes `header (magic, L, seed)` then `(name_len, name, bits)`
    /// records, sorted by name so identical contents give identical bytes.
    pub fn save(&self, path: &Path) -> Result<()> {
        let map = self.entries.read().unwrap();
        let mut names: Vec<&String> = map.keys().collect();
        names.sort();

        let mut w = BufWriter::new(std::fs::File::create(path)?);
        w.write_all(CODEBOOK_MAGIC)?;
        w.write_all(&(self.dim as u64).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&(names.len() as u64).to_le_bytes())?;
        for name in names {
            let hv = &map[name];
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(hv.as_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CODEBOOK_MAGIC {
            return Err(Error::Format("not a codebook file".into()));
        }
        let dim = read_u64(&mut r)? as usize;
        let seed = read_u64(&mut r)?;
        let count = read_u64(&mut r)?;
        let book = TokenCodebook::new(seed, dim)?;
        {
            let mut map = book.entries.write().unwrap();
            for _ in 0..count {
                let name_len = read_u32(&mut r)? as usize;
                let mut name = vec![0u8; name_len];
                r.read_exact(&mut name)?;
                let name = String::from_utf8(name)
                    .map_err(|_| Error::Format("codebook name is not UTF-8".into()))?;
                let mut bits = vec![0u8; dim.div_ceil(8)];
                r.read_exact(&mut bits)?;
                map.insert(name, Arc::new(Hypervector::from_bytes(bits, dim)?));
            }
        }
        Ok(book)
    }
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn check_token_dim(len: usize) -> Result<()> {
    if len == 0 || !len.is_multiple_of(8) {
        return Err(Error::InvalidDimension(format!(
            "token length must be a positive multiple of 8, got {len}"
        )));
    }
    Ok(())
}

/// Standalone token generation; equivalent to what a codebook caches.
pub fn generate_token(name: &str, len: usize, seed: u64) -> Result<Hypervector> {
    check_token_dim(len)?;
    Ok(generate_token_unchecked(name, len, seed))
}

fn generate_token_unchecked(name: &str, len: usize, seed: u64) -> Hypervector {
    let base = mix64(seed) ^ fnv1a64(name.as_bytes());
    Hypervector::from_seed(base, len).expect("length validated by caller")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix;
    use proptest::prelude::*;

    const L: usize = 10_000;

    fn rand_hv(rng: &mut SplitMix, len: usize) -> Hypervector {
        Hypervector::from_seed(rng.next_u64(), len).unwrap()
    }

    #[test]
    fn generate_token_is_deterministic() {
        let a = generate_token("calculus", L, 42).unwrap();
        let b = generate_token("calculus", L, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn distinct_names_are_quasi_orthogonal() {
        // 100 token pairs; every pair must land in the coarse window and the
        // mean must sit near 0.5.
        let mut sum = 0.0;
        for i in 0..100 {
            let a = generate_token(&format!("a{i}"), L, 42).unwrap();
            let b = generate_token(&format!("b{i}"), L, 42).unwrap();
            let s = similarity(&a, &b).unwrap();
            assert!((0.45..=0.55).contains(&s), "pair {i} similarity {s}");
            sum += s;
        }
        let mean = sum / 100.0;
        assert!((mean - 0.5).abs() < 0.005, "mean {mean}");
    }

    #[test]
    fn same_name_different_seed_is_independent() {
        for i in 0..100 {
            let a = generate_token(&format!("t{i}"), L, 42).unwrap();
            let b = generate_token(&format!("t{i}"), L, 43).unwrap();
            let s = similarity(&a, &b).unwrap();
            assert!((0.45..=0.55).contains(&s), "token t{i} similarity {s}");
        }
    }

    #[test]
    fn generate_token_rejects_bad_lengths() {
        assert!(matches!(
            generate_token("x", 0, 1),
            Err(Error::InvalidDimension(_))
        ));
        assert!(matches!(
            generate_token("x", 1001, 1),
            Err(Error::InvalidDimension(_))
        ));
    }

    #[test]
    fn bind_is_self_inverse_on_1000_pairs() {
        let mut rng = SplitMix::new(1);
        for _ in 0..1000 {
            let a = rand_hv(&mut rng, L);
            let b = rand_hv(&mut rng, L);
            let back = bind(&bind(&a, &b).unwrap(), &b).unwrap();
            assert_eq!(back, a);
        }
    }

    #[test]
    fn bind_with_zero_is_identity() {
        let a = generate_token("a", L, 7).unwrap();
        let z = Hypervector::zeros(L).unwrap();
        assert_eq!(bind(&a, &z).unwrap(), a);
    }

    #[test]
    fn bound_product_is_orthogonal_to_operand() {
        let mut rng = SplitMix::new(2);
        for _ in 0..50 {
            let a = rand_hv(&mut rng, L);
            let b = rand_hv(&mut rng, L);
            let s = similarity(&bind(&a, &b).unwrap(), &a).unwrap();
            assert!((0.45..=0.55).contains(&s), "similarity {s}");
        }
    }

    #[test]
    fn bind_rejects_length_mismatch() {
        let a = Hypervector::zeros(16).unwrap();
        let b = Hypervector::zeros(24).unwrap();
        assert!(matches!(bind(&a, &b), Err(Error::Dimension { .. })));
    }

    #[test]
    fn bundle_singleton_and_strict_majority() {
        let mut rng = SplitMix::new(3);
        let a = rand_hv(&mut rng, L);
        let b = rand_hv(&mut rng, L);
        let tb = rand_hv(&mut rng, L);
        assert_eq!(bundle(&[&a], &tb).unwrap(), a);
        assert_eq!(bundle(&[&a, &a, &b], &tb).unwrap(), a);
    }

    #[test]
    fn bundle_rejects_empty_input() {
        let tb = Hypervector::zeros(16).unwrap();
        assert!(matches!(bundle(&[], &tb), Err(Error::EmptyInput(_))));
    }

    /// Expected similarity of a member to the bundle of k random vectors,
    /// by direct enumeration of per-bit patterns (the member bit fixed,
    /// the other k-1 bits and the tie-break bit free).
    fn bundle_member_expectation(k: usize) -> f64 {
        let others = k - 1;
        let mut agree = 0u64;
        let total = 1u64 << (others + 1); // others + tiebreak bit
        for pattern in 0..total {
            let tiebreak = pattern & 1 == 1;
            let ones_others = (pattern >> 1).count_ones() as usize;
            // Member bit is 1; bundle bit is majority over k inputs.
            let ones = ones_others + 1;
            let bundle_bit = match (2 * ones).cmp(&k) {
                std::cmp::Ordering::Greater => true,
                std::cmp::Ordering::Equal => tiebreak,
                std::cmp::Ordering::Less => false,
            };
            if bundle_bit {
                agree += 1;
            }
        }
        agree as f64 / total as f64
    }

    #[test]
    fn bundle_of_three_matches_enumerated_expectation() {
        let expect = bundle_member_expectation(3);
        assert!((expect - 0.75).abs() < 1e-12);

        let mut rng = SplitMix::new(4);
        let vs: Vec<Hypervector> = (0..3).map(|_| rand_hv(&mut rng, L)).collect();
        let tb = rand_hv(&mut rng, L);
        let refs: Vec<&Hypervector> = vs.iter().collect();
        let bun = bundle(&refs, &tb).unwrap();
        let s = similarity(&bun, &vs[0]).unwrap();
        let sigma = (expect * (1.0 - expect) / L as f64).sqrt();
        assert!((s - expect).abs() < 3.0 * sigma, "s={s} expect={expect}");
    }

    #[test]
    fn bundle_member_signal_decays_monotonically_in_k() {
        let mut rng = SplitMix::new(5);
        let mut prev = 1.0f64;
        for k in [1usize, 3, 5, 9, 15] {
            let vs: Vec<Hypervector> = (0..k).map(|_| rand_hv(&mut rng, L)).collect();
            let tb = rand_hv(&mut rng, L);
            let refs: Vec<&Hypervector> = vs.iter().collect();
            let bun = bundle(&refs, &tb).unwrap();
            let s = similarity(&bun, &vs[0]).unwrap();
            let expect = bundle_member_expectation(k);
            let sigma = (expect * (1.0 - expect) / L as f64).sqrt().max(1e-9);
            assert!(
                (s - expect).abs() < 3.0 * sigma,
                "k={k} s={s} expect={expect}"
            );
            assert!(s < prev + 3.0 * sigma, "k={k} did not decay: {s} vs {prev}");
            prev = s;
        }
    }

    #[test]
    fn hamming_trivial_cases() {
        let a = generate_token("a", L, 9).unwrap();
        assert_eq!(hamming(&a, &a).unwrap(), (0, 1.0));
        let (d, s) = hamming(&a, &a.not()).unwrap();
        assert_eq!(d, L as u64);
        assert_eq!(s, 0.0);
    }

    #[test]
    fn bipolar_identity_holds_exactly() {
        // D - 2*distance must equal the +-1 inner product, computed here the
        // slow way, bit by bit.
        let mut rng = SplitMix::new(6);
        for _ in 0..200 {
            let a = rand_hv(&mut rng, 512);
            let b = rand_hv(&mut rng, 512);
            let (d, _) = hamming(&a, &b).unwrap();
            let mut ip: i64 = 0;
            for i in 0..512 {
                let x = if a.bit(i) { 1i64 } else { -1 };
                let y = if b.bit(i) { 1i64 } else { -1 };
                ip += x * y;
            }
            assert_eq!(512i64 - 2 * d as i64, ip);
        }
    }

    #[test]
    fn pairwise_similarity_concentration() {
        // |sim - 0.5| < 5 / (2 sqrt(L)) for at least 99% of random pairs.
        let mut rng = SplitMix::new(7);
        let bound = 5.0 / (2.0 * (L as f64).sqrt());
        let n = 400;
        let mut within = 0;
        for _ in 0..n {
            let a = rand_hv(&mut rng, L);
            let b = rand_hv(&mut rng, L);
            if (similarity(&a, &b).unwrap() - 0.5).abs() < bound {
                within += 1;
            }
        }
        assert!(
            within as f64 >= 0.99 * n as f64,
            "{within}/{n} within bound"
        );
    }

    #[test]
    fn codebook_roundtrips_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tokens.bin");
        let book = TokenCodebook::new(42, 256).unwrap();
        for name in ["alpha", "beta", "gamma"] {
            book.token(name);
        }
        book.save(&path).unwrap();
        let loaded = TokenCodebook::load(&path).unwrap();
        assert_eq!(loaded.seed(), 42);
        assert_eq!(loaded.dim(), 256);
        assert_eq!(*loaded.token("beta"), *book.token("beta"));

        // Same file again must be byte-identical.
        let path2 = dir.path().join("tokens2.bin");
        loaded.save(&path2).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    proptest! {
        #[test]
        fn prop_bind_self_inverse(seed_a in any::<u64>(), seed_b in any::<u64>()) {
            let a = Hypervector::from_seed(seed_a, 256).unwrap();
            let b = Hypervector::from_seed(seed_b, 256).unwrap();
            prop_assert_eq!(bind(&bind(&a, &b).unwrap(), &b).unwrap(), a);
        }

        #[test]
        fn prop_similarity_symmetric(seed_a in any::<u64>(), seed_b in any::<u64>()) {
            let a = Hypervector::from_seed(seed_a, 256).unwrap();
            let b = Hypervector::from_seed(seed_b, 256).unwrap();
            prop_assert_eq!(similarity(&a, &b).unwrap(), similarity(&b, &a).unwrap());
            prop_assert_eq!(similarity(&a, &a).unwrap(), 1.0);
        }

        #[test]
        fn prop_rotl1_preserves_popcount(seed in any::<u64>(), len in 1usize..300) {
            let a = Hypervector::from_seed(seed, len).unwrap();
            prop_assert_eq!(a.rotl1().count_ones(), a.count_ones());
        }
    }
}
