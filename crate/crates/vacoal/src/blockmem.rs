//! The simulated CAM: `B` blocks of `2^m` signed cells plus the label table
//! and the majority-vote read path.
//!
//! Cell encoding:
//!
//! - [`EMPTY`] (`i32::MIN`): never written;
//! - `tid >= 0`: the single entry stored at this address;
//! - [`COLLISION`] (`-1`): two different entries hit this address;
//! - `v < -1` (and not EMPTY): a bucket reference, `-(bucket_index + 2)`.
//!
//! A vote reads one cell per block at the diffused addresses. EMPTY and
//! negative cells abstain ("Don't Care"); the winner is the tid with the
//! most remaining votes, ties broken toward the lowest tid. CR1 is
//! `winner_votes / B` with `B` the *total* block count, so a single
//! Don't-Care block at `B = 128` yields 127/128, not 1.

use std::collections::{BTreeMap, HashMap};

use crate::error::Error;
use crate::galois::DiffuserBank;
use crate::hv::Hypervector;
use crate::rescue::RescueBuffer;
use crate::Result;

/// Sentinel for a never-written cell.
pub const EMPTY: i32 = i32::MIN;
/// Legacy collision marker.
pub const COLLISION: i32 = -1;
/// Largest assignable tid; above this the encoding space is exhausted.
pub const MAX_TID: i32 = i32::MAX - 2;

/// Encodes a bucket index as a cell value below -1.
pub fn bucket_ref(bucket_index: u32) -> i32 {
    -(bucket_index as i64 + 2) as i32
}

/// Dense bidirectional tid <-> label map. Tids are assigned in insertion
/// order from 0.
#[derive(Debug, Clone, Default)]
pub struct LabelTable {
    names: Vec<String>,
    ids: HashMap<String, i32>,
}

impl LabelTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, label: &str) -> Option<i32> {
        self.ids.get(label).copied()
    }

    pub fn get_or_insert(&mut self, label: &str) -> Result<i32> {
        if let Some(tid) = self.ids.get(label) {
            return Ok(*tid);
        }
        let tid = check_tid_capacity(self.names.len() as i64)?;
        self.names.push(label.to_string());
        self.ids.insert(label.to_string(), tid);
        Ok(tid)
    }

    pub fn name(&self, tid: i32) -> Option<&str> {
        if tid < 0 {
            return None;
        }
        self.names.get(tid as usize).map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Labels in tid order.
    pub fn names(&self) -> &[String] {
        &self.names
    }
}

fn check_tid_capacity(next: i64) -> Result<i32> {
    if next > MAX_TID as i64 {
        return Err(Error::Capacity(next));
    }
    Ok(next as i32)
}

/// Write/collision counters for both rate conventions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MemoryStats {
    /// Cell writes attempted (learns x blocks, including idempotent re-hits).
    pub write_attempts: u64,
    /// Attempts that found a different tid or an already-collided cell.
    pub collision_events: u64,
    /// Cells currently flagged negative by the learn path.
    pub collided_cells: u64,
    /// learn() calls completed.
    pub entries_learned: u64,
}

impl MemoryStats {
    /// Flagged cells / total cells.
    pub fn location_rate(&self, total_cells: u64) -> f64 {
        self.collided_cells as f64 / total_cells as f64
    }

    /// Flagged write attempts / total write attempts.
    pub fn count_rate(&self) -> f64 {
        if self.write_attempts == 0 {
            0.0
        } else {
            self.collision_events as f64 / self.write_attempts as f64
        }
    }
}

/// `B` flat arrays of `2^m` cells and the label table.
#[derive(Debug, Clone)]
pub struct BlockMemory {
    blocks: usize,
    m: u32,
    cells: Vec<i32>,
    labels: LabelTable,
    stats: MemoryStats,
}

impl BlockMemory {
    pub fn new(blocks: usize, m: u32) -> Result<Self> {
        if blocks == 0 || !blocks.is_power_of_two() {
            return Err(Error::Config(format!(
                "block count must be a power of two, got {blocks}"
            )));
        }
        if !(1..=32).contains(&m) {
            return Err(Error::Config(format!("depth exponent m={m} out of 1..=32")));
        }
        let total = blocks
            .checked_shl(m)
            .ok_or_else(|| Error::Config(format!("memory {blocks} x 2^{m} too large")))?;
        Ok(BlockMemory {
            blocks,
            m,
            cells: vec![EMPTY; total],
            labels: LabelTable::new(),
            stats: MemoryStats::default(),
        })
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn depth(&self) -> usize {
        1usize << self.m
    }

    pub fn total_cells(&self) -> u64 {
        (self.blocks as u64) << self.m
    }

    pub fn labels(&self) -> &LabelTable {
        &self.labels
    }

    pub fn stats(&self) -> &MemoryStats {
        &self.stats
    }

    pub fn cell(&self, block: usize, addr: u32) -> i32 {
        self.cells[(block << self.m) + addr as usize]
    }

    /// Raw cell write. Bypasses stats; meant for constructed fixtures
    /// (forced Don't-Cares, bucket references) and diagnostics.
    pub fn poke_cell(&mut self, block: usize, addr: u32, value: i32) {
        self.cells[(block << self.m) + addr as usize] = value;
    }

    pub(crate) fn raw_cells(&self) -> &[i32] {
        &self.cells
    }

    pub(crate) fn from_parts(
        blocks: usize,
        m: u32,
        cells: Vec<i32>,
        labels: LabelTable,
        stats: MemoryStats,
    ) -> Self {
        BlockMemory {
            blocks,
            m,
            cells,
            labels,
            stats,
        }
    }

    fn check_bank(&self, bank: &DiffuserBank) -> Result<()> {
        if bank.blocks() != self.blocks || bank.m() != self.m {
            return Err(Error::Config(format!(
                "bank ({} blocks, m={}) does not match memory ({} blocks, m={})",
                bank.blocks(),
                bank.m(),
                self.blocks,
                self.m
            )));
        }
        Ok(())
    }

    fn check_hv(&self, hv: &Hypervector, bank: &DiffuserBank) -> Result<()> {
        self.check_bank(bank)?;
        if hv.len() != bank.total_bits() {
            return Err(Error::Dimension {
                expected: bank.total_bits(),
                got: hv.len(),
            });
        }
        Ok(())
    }

    /// Stores `(hv, label)`: assigns (or looks up) the tid and writes it at
    /// the diffused address of every block. An occupied cell holding a
    /// different tid becomes [`COLLISION`]; re-learning the identical pair
    /// is a no-op. When a rescue buffer is supplied the full
    /// (addresses, segments, tid) sample is appended regardless of
    /// collisions.
    pub fn learn(
        &mut self,
        hv: &Hypervector,
        label: &str,
        bank: &DiffuserBank,
        rescue: Option<&mut RescueBuffer>,
    ) -> Result<i32> {
        self.check_hv(hv, bank)?;
        let tid = self.labels.get_or_insert(label)?;
        let seg_bytes = bank.segment_bytes();

        let mut addresses = rescue.is_some().then(|| Vec::with_capacity(self.blocks));
        for b in 0..self.blocks {
            let segment = hv.segment(b, seg_bytes);
            let addr = bank.diffuse(b, segment)?;
            if let Some(addrs) = addresses.as_mut() {
                addrs.push(addr);
            }
            let idx = (b << self.m) + addr as usize;
            self.stats.write_attempts += 1;
            let cell = self.cells[idx];
            if cell == EMPTY {
                self.cells[idx] = tid;
            } else if cell == tid {
                // Idempotent re-learn.
            } else if cell >= 0 {
                self.cells[idx] = COLLISION;
                self.stats.collided_cells += 1;
                self.stats.collision_events += 1;
            } else {
                // Already collided (or a bucket); the marker stands.
                self.stats.collision_events += 1;
            }
        }

        if let Some(buf) = rescue {
            buf.push(addresses.unwrap(), hv, seg_bytes, tid);
        }
        self.stats.entries_learned += 1;
        Ok(tid)
    }

    /// Raw cell contents at the `B` diffused addresses of `hv`.
    pub fn read_votes(&self, hv: &Hypervector, bank: &DiffuserBank) -> Result<Vec<i32>> {
        self.check_hv(hv, bank)?;
        let seg_bytes = bank.segment_bytes();
        let mut votes = Vec::with_capacity(self.blocks);
        for b in 0..self.blocks {
            let addr = bank.diffuse(b, hv.segment(b, seg_bytes))?;
            votes.push(self.cell(b, addr));
        }
        Ok(votes)
    }
}

/// Outcome of one majority vote.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoteResult {
    pub winner_tid: Option<i32>,
    pub winner_votes: u32,
    /// `winner_votes / B`, with B the total block count.
    pub cr1: f64,
    pub dont_care_blocks: u32,
}

/// Ballot count over raw cell values. EMPTY and negative cells are
/// excluded; each block contributes at most one vote; ties break toward
/// the lowest tid.
pub fn majority_vote(votes: &[i32]) -> VoteResult {
    let blocks = votes.len() as u32;
    let mut tally: BTreeMap<i32, u32> = BTreeMap::new();
    let mut dont_care = 0u32;
    for &v in votes {
        if v >= 0 {
            *tally.entry(v).or_insert(0) += 1;
        } else {
            dont_care += 1;
        }
    }
    let mut winner: Option<(i32, u32)> = None;
    for (&tid, &count) in &tally {
        match winner {
            Some((_, best)) if count <= best => {}
            _ => winner = Some((tid, count)),
        }
    }
    match winner {
        Some((tid, count)) => VoteResult {
            winner_tid: Some(tid),
            winner_votes: count,
            cr1: count as f64 / blocks as f64,
            dont_care_blocks: dont_care,
        },
        None => VoteResult {
            winner_tid: None,
            winner_votes: 0,
            cr1: 0.0,
            dont_care_blocks: dont_care,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hv;
    use crate::rng::SplitMix;

    fn setup(blocks: usize, m: u32, seg_bits: usize, seed: u64) -> (BlockMemory, DiffuserBank) {
        let bank = DiffuserBank::new(seed, blocks, m, seg_bits).unwrap();
        let mem = BlockMemory::new(blocks, m).unwrap();
        (mem, bank)
    }

    fn rand_hv(rng: &mut SplitMix, len: usize) -> Hypervector {
        Hypervector::from_seed(rng.next_u64(), len).unwrap()
    }

    #[test]
    fn first_entry_gets_tid_zero_without_collisions() {
        let (mut mem, bank) = setup(8, 12, 64, 1);
        let hv = hv::generate_token("first", bank.total_bits(), 1).unwrap();
        let tid = mem.learn(&hv, "first", &bank, None).unwrap();
        assert_eq!(tid, 0);
        assert_eq!(mem.stats().collision_events, 0);
        assert_eq!(mem.stats().collided_cells, 0);
        let votes = mem.read_votes(&hv, &bank).unwrap();
        assert!(votes.iter().all(|&v| v == 0));
    }

    #[test]
    fn relearning_is_idempotent() {
        let (mut mem, bank) = setup(8, 12, 64, 2);
        let hv = hv::generate_token("again", bank.total_bits(), 2).unwrap();
        let t1 = mem.learn(&hv, "again", &bank, None).unwrap();
        let t2 = mem.learn(&hv, "again", &bank, None).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(mem.stats().collision_events, 0);
        assert_eq!(mem.stats().entries_learned, 2);
    }

    /// Finds a companion vector whose block-`target` address collides with
    /// `base` while all other blocks stay distinct.
    fn craft_single_block_collision(
        base: &Hypervector,
        bank: &DiffuserBank,
        target: usize,
    ) -> Hypervector {
        let seg_bytes = bank.segment_bytes();
        let base_addrs: Vec<u32> = (0..bank.blocks())
            .map(|b| bank.diffuse(b, base.segment(b, seg_bytes)).unwrap())
            .collect();
        let mut rng = SplitMix::new(0xC0FFEE);
        loop {
            let cand = rand_hv(&mut rng, bank.total_bits());
            if cand.segment(target, seg_bytes) == base.segment(target, seg_bytes) {
                continue; // need an address collision, not an equal segment
            }
            let ok = (0..bank.blocks()).all(|b| {
                let addr = bank.diffuse(b, cand.segment(b, seg_bytes)).unwrap();
                if b == target {
                    addr == base_addrs[b]
                } else {
                    addr != base_addrs[b]
                }
            });
            if ok {
                return cand;
            }
        }
    }

    #[test]
    fn single_block_collision_flags_exactly_one_cell() {
        let (mut mem, bank) = setup(4, 8, 64, 3);
        let a = hv::generate_token("a", bank.total_bits(), 3).unwrap();
        let b = craft_single_block_collision(&a, &bank, 3);
        mem.learn(&a, "a", &bank, None).unwrap();
        mem.learn(&b, "b", &bank, None).unwrap();
        assert_eq!(mem.stats().collided_cells, 1);
        assert_eq!(mem.stats().collision_events, 1);

        let votes = mem.read_votes(&a, &bank).unwrap();
        assert_eq!(votes.iter().filter(|&&v| v == COLLISION).count(), 1);
        assert_eq!(votes.iter().filter(|&&v| v == 0).count(), 3);
        assert_eq!(votes[3], COLLISION);
    }

    #[test]
    fn unlearned_probe_reads_mostly_empty() {
        let (mut mem, bank) = setup(8, 16, 64, 4);
        let mut rng = SplitMix::new(17);
        for i in 0..50 {
            let hv = rand_hv(&mut rng, bank.total_bits());
            mem.learn(&hv, &format!("e{i}"), &bank, None).unwrap();
        }
        let mut empty = 0u64;
        let mut total = 0u64;
        for _ in 0..1000 {
            let probe = rand_hv(&mut rng, bank.total_bits());
            for v in mem.read_votes(&probe, &bank).unwrap() {
                total += 1;
                if v == EMPTY {
                    empty += 1;
                }
            }
        }
        // 50 entries in 2^16 cells per block: a random probe hits an
        // occupied cell with probability <~ 0.1%.
        assert!(empty as f64 / total as f64 > 0.99, "{empty}/{total}");
    }

    #[test]
    fn collision_rates_track_birthday_prediction() {
        // Load K entries into blocks of 2^m cells; the expected number of
        // occupied-cell hits per block is K - D(1 - (1 - 1/D)^K). The
        // measured count-based rate must land within an order of magnitude.
        let (mut mem, bank) = setup(8, 12, 64, 5);
        let entries = 600usize;
        let mut rng = SplitMix::new(23);
        for i in 0..entries {
            let hv = rand_hv(&mut rng, bank.total_bits());
            mem.learn(&hv, &format!("n{i}"), &bank, None).unwrap();
        }
        let d = mem.depth() as f64;
        let k = entries as f64;
        let expected_hits_per_block = k - d * (1.0 - (1.0 - 1.0 / d).powf(k));
        let predicted_rate = expected_hits_per_block / k;
        let measured = mem.stats().count_rate();
        assert!(
            measured > predicted_rate / 10.0 && measured < predicted_rate * 10.0,
            "measured {measured}, predicted {predicted_rate}"
        );
        // Location rate is reported against total cells.
        let loc = mem.stats().location_rate(mem.total_cells());
        assert!(loc > 0.0 && loc < 1.0);
    }

    #[test]
    fn majority_vote_unanimous() {
        let votes = vec![7i32; 128];
        let r = majority_vote(&votes);
        assert_eq!(r.winner_tid, Some(7));
        assert_eq!(r.winner_votes, 128);
        assert_eq!(r.cr1, 1.0);
        assert_eq!(r.dont_care_blocks, 0);
    }

    #[test]
    fn majority_vote_single_dont_care() {
        let mut votes = vec![7i32; 128];
        votes[31] = COLLISION;
        let r = majority_vote(&votes);
        assert_eq!(r.winner_tid, Some(7));
        assert_eq!(r.winner_votes, 127);
        assert!((r.cr1 - 127.0 / 128.0).abs() < 1e-15);
        assert_eq!(r.dont_care_blocks, 1);
    }

    #[test]
    fn majority_vote_against_flat_field_matches_brute_force() {
        // 68 true votes, 60 scattered random tids; cross-check the tally
        // against an independent count.
        let mut rng = SplitMix::new(31);
        let mut votes = vec![7i32; 68];
        for _ in 0..60 {
            votes.push(rng.next_below(10_000) as i32 + 8);
        }
        let r = majority_vote(&votes);

        let mut counts: BTreeMap<i32, u32> = BTreeMap::new();
        for &v in &votes {
            if v >= 0 {
                *counts.entry(v).or_default() += 1;
            }
        }
        let best = counts.iter().map(|(_, &c)| c).max().unwrap();
        let brute = counts.iter().find(|(_, &c)| c == best).map(|(&t, _)| t);
        assert_eq!(r.winner_tid, brute);
        assert_eq!(r.winner_tid, Some(7));
        assert_eq!(r.winner_votes, 68);
    }

    #[test]
    fn majority_vote_empty_field() {
        let votes = vec![EMPTY; 16];
        let r = majority_vote(&votes);
        assert_eq!(r.winner_tid, None);
        assert_eq!(r.cr1, 0.0);
        assert_eq!(r.dont_care_blocks, 16);
    }

    #[test]
    fn majority_vote_ties_break_to_lowest_tid() {
        let votes = vec![5, 5, 3, 3, EMPTY, COLLISION];
        let r = majority_vote(&votes);
        assert_eq!(r.winner_tid, Some(3));
        assert_eq!(r.winner_votes, 2);
        assert_eq!(r.dont_care_blocks, 2);
    }

    #[test]
    fn winner_votes_decay_with_query_distance() {
        // Mean winner votes across noisy queries must be non-increasing in
        // the Hamming distance of the query from the learned key.
        let (mut mem, bank) = setup(64, 16, 64, 6);
        let l = bank.total_bits();
        let key = hv::generate_token("key", l, 6).unwrap();
        mem.learn(&key, "key", &bank, None).unwrap();

        let mut rng = SplitMix::new(41);
        let mut prev = f64::INFINITY;
        for level in 0..10 {
            let distance = level * l / 20;
            let mut sum = 0u64;
            let trials = 300;
            for _ in 0..trials {
                let mut probe = key.clone();
                // Flip `distance` distinct random bits.
                let mut flipped = std::collections::HashSet::new();
                while flipped.len() < distance {
                    let i = rng.next_below(l as u64) as usize;
                    if flipped.insert(i) {
                        probe = probe.with_flipped_bit(i);
                    }
                }
                let votes = mem.read_votes(&probe, &bank).unwrap();
                let r = majority_vote(&votes);
                if r.winner_tid == Some(0) {
                    sum += r.winner_votes as u64;
                }
            }
            let mean = sum as f64 / trials as f64;
            assert!(
                mean <= prev + 0.5,
                "level {level}: mean {mean} rose above {prev}"
            );
            prev = mean;
        }
    }

    #[test]
    fn bank_mismatch_is_rejected() {
        let (mut mem, _) = setup(8, 12, 64, 7);
        let other = DiffuserBank::new(7, 16, 12, 64).unwrap();
        let hv = hv::generate_token("x", other.total_bits(), 7).unwrap();
        assert!(matches!(
            mem.learn(&hv, "x", &other, None),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn wrong_length_is_rejected() {
        let (mut mem, bank) = setup(8, 12, 64, 8);
        let hv = hv::generate_token("x", 256, 8).unwrap();
        assert!(matches!(
            mem.learn(&hv, "x", &bank, None),
            Err(Error::Dimension { .. })
        ));
        assert!(matches!(
            mem.read_votes(&hv, &bank),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn label_table_is_dense_and_bijective() {
        let mut t = LabelTable::new();
        assert_eq!(t.get_or_insert("a").unwrap(), 0);
        assert_eq!(t.get_or_insert("b").unwrap(), 1);
        assert_eq!(t.get_or_insert("a").unwrap(), 0);
        assert_eq!(t.name(1), Some("b"));
        assert_eq!(t.get("c"), None);
    }

    #[test]
    fn bucket_ref_encoding_is_below_minus_one() {
        assert_eq!(bucket_ref(0), -2);
        assert_eq!(bucket_ref(5), -7);
        assert!(bucket_ref(0) < COLLISION);
    }

    #[test]
    fn tid_capacity_is_enforced() {
        assert_eq!(check_tid_capacity(0).unwrap(), 0);
        assert_eq!(check_tid_capacity(MAX_TID as i64).unwrap(), MAX_TID);
        assert!(matches!(
            check_tid_capacity(MAX_TID as i64 + 1),
            Err(Error::Capacity(_))
        ));
    }
}
