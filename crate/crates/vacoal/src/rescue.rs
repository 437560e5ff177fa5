//! Exogenous collision recovery: accumulate at write time, sort per block,
//! binary-search at read time, confirm by segment exact match.
//!
//! The pipeline never guesses. A collided block either produces the tid
//! whose stored segment is byte-identical to the query's segment, or it
//! stays out of the vote (a genuine Don't Care). At full sampling
//! (`RR = 1`) every collided block with a truly matching segment is
//! recovered, which pins CR1 of learned keys to exactly 1.0 and makes the
//! memory behave like a plain exact-match map.

use std::io::{Read, Write};

use crate::blockmem::{majority_vote, BlockMemory, VoteResult};
use crate::error::Error;
use crate::galois::DiffuserBank;
use crate::hv::Hypervector;
use crate::rng::SplitMix;
use crate::Result;

/// Sampling rate of the rescue pipeline. 1 keeps every sample, 0 disables
/// the pipeline entirely.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RescueRate(f64);

impl RescueRate {
    pub fn new(rr: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rr) {
            return Err(Error::Config(format!("rescue rate {rr} out of [0, 1]")));
        }
        Ok(RescueRate(rr))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_off(self) -> bool {
        self.0 == 0.0
    }

    pub fn is_full(self) -> bool {
        self.0 == 1.0
    }
}

/// One learned sample: per-block addresses, the packed vector (segment `b`
/// is bytes `b*seg .. (b+1)*seg`), and the tid it was stored under.
#[derive(Debug, Clone)]
struct Sample {
    addresses: Vec<u32>,
    packed: Box<[u8]>,
    tid: i32,
}

/// Append-only write-time accumulator.
#[derive(Debug, Default)]
pub struct RescueBuffer {
    samples: Vec<Sample>,
    seg_bytes: usize,
}

impl RescueBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub(crate) fn push(
        &mut self,
        addresses: Vec<u32>,
        hv: &Hypervector,
        seg_bytes: usize,
        tid: i32,
    ) {
        debug_assert!(self.seg_bytes == 0 || self.seg_bytes == seg_bytes);
        self.seg_bytes = seg_bytes;
        self.samples.push(Sample {
            addresses,
            packed: hv.as_bytes().into(),
            tid,
        });
    }

    /// Direct insertion for constructed fixtures.
    pub fn push_raw(&mut self, addresses: Vec<u32>, packed: Vec<u8>, seg_bytes: usize, tid: i32) {
        debug_assert_eq!(packed.len(), addresses.len() * seg_bytes);
        self.seg_bytes = seg_bytes;
        self.samples.push(Sample {
            addresses,
            packed: packed.into(),
            tid,
        });
    }
}

/// One finalized entry of a per-block array.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RescueEntry {
    pub address: u32,
    pub segment: Box<[u8]>,
    pub tid: i32,
}

/// Per-block address-sorted arrays; immutable after [`finalize`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RescueTable {
    blocks: Vec<Vec<RescueEntry>>,
    seg_bytes: usize,
}

/// Subsamples the buffer at rate `rr` (per-sample Bernoulli, seeded) and
/// re-indexes it by block, each array sorted ascending by address with
/// insertion order preserved on equal addresses.
pub fn finalize(buffer: &RescueBuffer, rr: RescueRate, seed: u64) -> RescueTable {
    if rr.is_off() || buffer.is_empty() {
        return RescueTable::default();
    }
    let block_count = buffer.samples[0].addresses.len();
    let seg = buffer.seg_bytes;
    let mut rng = SplitMix::new(seed);
    let mut blocks: Vec<Vec<RescueEntry>> = vec![Vec::new(); block_count];
    for sample in &buffer.samples {
        // Full sampling never touches the stream, so RR = 1 tables are
        // independent of the subsampling seed.
        if !rr.is_full() && rng.next_f64() >= rr.value() {
            continue;
        }
        for (b, arr) in blocks.iter_mut().enumerate() {
            arr.push(RescueEntry {
                address: sample.addresses[b],
                segment: sample.packed[b * seg..(b + 1) * seg].into(),
                tid: sample.tid,
            });
        }
    }
    for arr in blocks.iter_mut() {
        arr.sort_by_key(|e| e.address); // stable, keeps insertion order
    }
    RescueTable {
        blocks,
        seg_bytes: seg,
    }
}

impl RescueTable {
    pub fn is_empty(&self) -> bool {
        self.blocks.iter().all(|b| b.is_empty())
    }

    pub fn block_len(&self, block: usize) -> usize {
        self.blocks.get(block).map_or(0, |b| b.len())
    }

    pub fn seg_bytes(&self) -> usize {
        self.seg_bytes
    }

    pub fn entries(&self, block: usize) -> &[RescueEntry] {
        &self.blocks[block]
    }

    /// Recovers the tid stored for `query_segment` at `(block, addr)`, or
    /// `None` when no byte-identical segment was sampled there.
    pub fn resolve(&self, block: usize, addr: u32, query_segment: &[u8]) -> Option<i32> {
        self.resolve_counted(block, addr, query_segment).0
    }

    /// Same as [`Self::resolve`], returning (address comparisons, segment
    /// comparisons) for cost assertions.
    fn resolve_counted(
        &self,
        block: usize,
        addr: u32,
        query_segment: &[u8],
    ) -> (Option<i32>, u64, u64) {
        let Some(entries) = self.blocks.get(block) else {
            return (None, 0, 0);
        };
        let mut addr_cmps = 0u64;
        let lo = lower_bound(entries, addr, &mut addr_cmps);
        let hi = upper_bound(entries, addr, &mut addr_cmps);
        let mut seg_cmps = 0u64;
        for e in &entries[lo..hi] {
            seg_cmps += 1;
            if e.segment.as_ref() == query_segment {
                return (Some(e.tid), addr_cmps, seg_cmps);
            }
        }
        (None, addr_cmps, seg_cmps)
    }

    pub(crate) fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(&(self.blocks.len() as u64).to_le_bytes())?;
        w.write_all(&(self.seg_bytes as u64).to_le_bytes())?;
        for arr in &self.blocks {
            w.write_all(&(arr.len() as u64).to_le_bytes())?;
            for e in arr {
                w.write_all(&e.address.to_le_bytes())?;
                w.write_all(&e.segment)?;
                w.write_all(&e.tid.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub(crate) fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut u64buf = [0u8; 8];
        r.read_exact(&mut u64buf)?;
        let block_count = u64::from_le_bytes(u64buf) as usize;
        r.read_exact(&mut u64buf)?;
        let seg_bytes = u64::from_le_bytes(u64buf) as usize;
        let mut blocks = Vec::with_capacity(block_count);
        for _ in 0..block_count {
            r.read_exact(&mut u64buf)?;
            let count = u64::from_le_bytes(u64buf) as usize;
            let mut arr = Vec::with_capacity(count);
            for _ in 0..count {
                let mut a = [0u8; 4];
                r.read_exact(&mut a)?;
                let mut segment = vec![0u8; seg_bytes];
                r.read_exact(&mut segment)?;
                let mut t = [0u8; 4];
                r.read_exact(&mut t)?;
                arr.push(RescueEntry {
                    address: u32::from_le_bytes(a),
                    segment: segment.into(),
                    tid: i32::from_le_bytes(t),
                });
            }
            blocks.push(arr);
        }
        Ok(RescueTable { blocks, seg_bytes })
    }
}

fn lower_bound(entries: &[RescueEntry], addr: u32, cmps: &mut u64) -> usize {
    let (mut lo, mut hi) = (0usize, entries.len());
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        *cmps += 1;
        if entries[mid].address < addr {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}

fn upper_bound(entries: &[RescueEntry], addr: u32, cmps: &mut u64) -> usize {
    let (mut lo, mut hi) = (0usize, entries.len());
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        *cmps += 1;
        if entries[mid].address <= addr {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Majority vote with collided blocks restored through the table. Every
/// negative cell value triggers a resolve; a recovered tid rejoins the
/// vote, a miss stays Don't Care.
pub fn vote_with_rescue(
    memory: &BlockMemory,
    table: &RescueTable,
    hv: &Hypervector,
    bank: &DiffuserBank,
) -> Result<VoteResult> {
    let seg_bytes = bank.segment_bytes();
    let mut votes = memory.read_votes(hv, bank)?;
    for (b, v) in votes.iter_mut().enumerate() {
        if *v < 0 {
            let segment = hv.segment(b, seg_bytes);
            let addr = bank.diffuse(b, segment)?;
            if let Some(tid) = table.resolve(b, addr, segment) {
                *v = tid;
            }
        }
    }
    Ok(majority_vote(&votes))
}
