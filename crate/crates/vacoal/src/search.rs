//! Frontier-bounded multi-hop genealogy traversal.
//!
//! Edges live in the block memory as `bind(token(student), token("__ord__j"))
//! -> mentor` entries, one key per (student, ordinal) so each key stays
//! single-valued. A trace expands every frontier path through all ordinals
//! of its node, votes each key, and carries two confidences:
//!
//! - CR1: the block-voting rate of the single query that produced an edge;
//! - CR2: the running product of CR1 along the path, `CR2(0) = 1`.
//!
//! Children are dropped when the mentor already occurs on their own path
//! (residual-cycle guard), or when the accumulated CR2 falls under the halt
//! threshold. After each generation the frontier is ordered by the prune
//! criterion and truncated to the frontier size FS. Rescue mode restores
//! collided blocks (CR1 pinned to 1 on clean data) and prunes
//! lexicographically; Don't-Care mode lets collisions decay CR2 and prunes
//! by descending CR2, which is what makes deep detours lose seats to short
//! direct routes.
//!
//! [`oracle_trace`] walks the adjacency map directly with CR1 = CR2 = 1 and
//! lexicographic pruning. With full rescue sampling the memory-backed trace
//! must reproduce it record for record; [`compare_traces`] measures any
//! divergence.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::blockmem::{majority_vote, BlockMemory, VoteResult};
use crate::error::Error;
use crate::galois::DiffuserBank;
use crate::graph::AdjacencyIndex;
use crate::hv::{bind, Hypervector, TokenCodebook};
use crate::rescue::{vote_with_rescue, RescueBuffer, RescueTable};
use crate::Result;

pub const DEFAULT_MAX_DEPTH: u32 = 57;
pub const DEFAULT_CR2_HALT: f64 = 0.100;

/// Name of the ordinal token bound to a student token to form edge key `j`.
pub fn ordinal_token(j: usize) -> String {
    format!("__ord__{j}")
}

/// The memory key of the `j`-th edge of `student`.
pub fn edge_key(codebook: &TokenCodebook, student: &str, j: usize) -> Result<Hypervector> {
    bind(&codebook.token(student), &codebook.token(&ordinal_token(j)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    Rescue,
    DontCare,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneOrder {
    DescendingCr2,
    Lexicographic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SearchConfig {
    pub fs: usize,
    pub max_depth: u32,
    pub cr2_halt: f64,
    pub mode: SearchMode,
    pub prune_order: PruneOrder,
}

impl SearchConfig {
    /// Defaults: depth 57, halt 0.100, prune order forced from the mode
    /// (rescue is always lexicographic, Don't-Care defaults to descending
    /// CR2).
    pub fn new(mode: SearchMode, fs: usize) -> Result<Self> {
        let cfg = SearchConfig {
            fs,
            max_depth: DEFAULT_MAX_DEPTH,
            cr2_halt: DEFAULT_CR2_HALT,
            mode,
            prune_order: match mode {
                SearchMode::Rescue => PruneOrder::Lexicographic,
                SearchMode::DontCare => PruneOrder::DescendingCr2,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_max_depth(mut self, max_depth: u32) -> Self {
        self.max_depth = max_depth;
        self
    }

    pub fn with_cr2_halt(mut self, halt: f64) -> Result<Self> {
        self.cr2_halt = halt;
        self.validate()?;
        Ok(self)
    }

    pub fn with_prune_order(mut self, order: PruneOrder) -> Result<Self> {
        self.prune_order = order;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if self.fs == 0 {
            return Err(Error::Config("frontier size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.cr2_halt) {
            return Err(Error::Config(format!(
                "cr2 halt {} out of [0, 1)",
                self.cr2_halt
            )));
        }
        if self.mode == SearchMode::Rescue && self.prune_order != PruneOrder::Lexicographic {
            return Err(Error::Config(
                "rescue mode forces lexicographic pruning".into(),
            ));
        }
        Ok(())
    }
}

/// One emitted genealogy row.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub start: String,
    pub generation: u32,
    pub node: String,
    pub parent: String,
    pub cr1: f64,
    pub cr2: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GenerationStats {
    pub generation: u32,
    pub queries: u64,
    pub records: u64,
    pub vote_failures: u64,
    pub dont_care_blocks: u64,
    pub mean_cr1: Option<f64>,
    pub mean_cr2: Option<f64>,
    pub min_cr2: Option<f64>,
    pub frontier_after_prune: usize,
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct TraceSummary {
    pub total_records: u64,
    pub generations: Vec<GenerationStats>,
}

/// A completed trace: the record rows plus, per record, the index of its
/// parent record (`None` when the parent is a start node). The links carry
/// the path identity that the flat rows cannot, and feed the traffic
/// profiler.
#[derive(Debug, Default)]
pub struct TraceRun {
    pub records: Vec<PathRecord>,
    pub parent_links: Vec<Option<u32>>,
    pub summary: TraceSummary,
}

impl TraceRun {
    /// Votes per node: one record naming the node = one traversing path.
    pub fn node_votes(&self) -> BTreeMap<String, u64> {
        node_votes(&self.records)
    }
}

struct Entry {
    node: Arc<str>,
    node_id: u32,
    parent: Arc<str>,
    start: Arc<str>,
    cr2: f64,
    ancestors: Arc<HashSet<u32>>,
    record_idx: Option<u32>,
}

#[derive(Default)]
struct Interner {
    ids: HashMap<Arc<str>, u32>,
}

impl Interner {
    fn intern(&mut self, name: &Arc<str>) -> u32 {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = self.ids.len() as u32;
        self.ids.insert(Arc::clone(name), id);
        id
    }
}

struct QueryOutcome {
    mentor: Option<(String, f64)>,
    dont_care_blocks: u32,
}

/// Learns every purified edge: student `S` with mentors `M_0..M_{k-1}` in
/// lexicographic order yields keys `bind(token(S), ord_j) -> M_j`. Returns
/// the number of edges learned.
pub fn learn_graph(
    memory: &mut BlockMemory,
    adjacency: &AdjacencyIndex,
    codebook: &TokenCodebook,
    bank: &DiffuserBank,
    mut rescue: Option<&mut RescueBuffer>,
) -> Result<usize> {
    let mut learned = 0;
    for (student, mentors) in adjacency.students() {
        for (j, mentor) in mentors.iter().enumerate() {
            let key = edge_key(codebook, student, j)?;
            memory.learn(&key, mentor, bank, rescue.as_deref_mut())?;
            learned += 1;
        }
    }
    Ok(learned)
}

/// Memory-backed trace. `rescue` must be present in rescue mode.
pub fn trace(
    memory: &BlockMemory,
    bank: &DiffuserBank,
    codebook: &TokenCodebook,
    rescue: Option<&RescueTable>,
    adjacency: &AdjacencyIndex,
    starts: &[String],
    config: &SearchConfig,
) -> Result<TraceRun> {
    config.validate()?;
    if config.mode == SearchMode::Rescue && rescue.is_none() {
        return Err(Error::Config("rescue mode needs a rescue table".into()));
    }
    let expand = |node: &str, j: usize| -> Result<QueryOutcome> {
        let key = edge_key(codebook, node, j)?;
        let vote: VoteResult = match config.mode {
            SearchMode::Rescue => vote_with_rescue(memory, rescue.unwrap(), &key, bank)?,
            SearchMode::DontCare => majority_vote(&memory.read_votes(&key, bank)?),
        };
        let mentor = vote
            .winner_tid
            .and_then(|tid| memory.labels().name(tid))
            .map(|name| (name.to_string(), vote.cr1));
        Ok(QueryOutcome {
            mentor,
            dont_care_blocks: vote.dont_care_blocks,
        })
    };
    drive(adjacency, starts, config, &expand)
}

/// Map-based reference traversal: identical loop, CR1 = CR2 = 1.0,
/// lexicographic pruning.
pub fn oracle_trace(
    adjacency: &AdjacencyIndex,
    starts: &[String],
    config: &SearchConfig,
) -> Result<TraceRun> {
    let oracle_config = SearchConfig {
        mode: SearchMode::Rescue, // CRs pinned to 1.0 below
        prune_order: PruneOrder::Lexicographic,
        ..*config
    };
    let expand = |node: &str, j: usize| -> Result<QueryOutcome> {
        let mentor = adjacency.mentors(node).get(j).map(|m| (m.clone(), 1.0f64));
        Ok(QueryOutcome {
            mentor,
            dont_care_blocks: 0,
        })
    };
    drive(adjacency, starts, &oracle_config, &expand)
}

fn drive(
    adjacency: &AdjacencyIndex,
    starts: &[String],
    config: &SearchConfig,
    expand: &(dyn Fn(&str, usize) -> Result<QueryOutcome> + Sync),
) -> Result<TraceRun> {
    let unknown: Vec<String> = starts
        .iter()
        .filter(|s| !adjacency.contains(s))
        .cloned()
        .collect();
    if !unknown.is_empty() {
        return Err(Error::UnknownStarts(unknown));
    }

    let mut interner = Interner::default();
    let empty_ancestors = Arc::new(HashSet::new());
    let mut frontier: Vec<Entry> = starts
        .iter()
        .map(|s| {
            let node: Arc<str> = Arc::from(s.as_str());
            let node_id = interner.intern(&node);
            Entry {
                start: Arc::clone(&node),
                parent: Arc::from(""),
                node,
                node_id,
                cr2: 1.0,
                ancestors: Arc::clone(&empty_ancestors),
                record_idx: None,
            }
        })
        .collect();
    sort_frontier(&mut frontier, config.prune_order);
    frontier.truncate(config.fs);

    let mut run = TraceRun::default();
    for gen in 1..=config.max_depth {
        if frontier.is_empty() {
            break;
        }

        // Expansion of distinct entries is independent; results are folded
        // back in entry order, so parallelism cannot perturb the output.
        type Expansion = (Vec<(String, f64)>, u64, u64, u64);
        let expansions: Vec<Expansion> = frontier
            .par_iter()
            .map(|entry| {
                let out_degree = adjacency.out_degree(&entry.node);
                let mut children = Vec::new();
                let mut queries = 0u64;
                let mut failures = 0u64;
                let mut dont_cares = 0u64;
                for j in 0..out_degree {
                    queries += 1;
                    let outcome = expand(&entry.node, j)?;
                    dont_cares += outcome.dont_care_blocks as u64;
                    match outcome.mentor {
                        Some((mentor, cr1)) => children.push((mentor, cr1)),
                        None => failures += 1,
                    }
                }
                Ok((children, queries, failures, dont_cares))
            })
            .collect::<Result<_>>()?;

        let mut next: Vec<Entry> = Vec::new();
        let mut queries = 0u64;
        let mut failures = 0u64;
        let mut dont_cares = 0u64;
        let mut cr1_sum = 0.0f64;
        let mut cr2_sum = 0.0f64;
        let mut min_cr2: Option<f64> = None;
        let mut emitted = 0u64;

        for (entry, (children, q, f, d)) in frontier.iter().zip(expansions) {
            queries += q;
            failures += f;
            dont_cares += d;
            let mut child_ancestors: Option<Arc<HashSet<u32>>> = None;
            for (mentor, cr1) in children {
                let mentor_arc: Arc<str> = Arc::from(mentor.as_str());
                let mentor_id = interner.intern(&mentor_arc);
                if mentor_id == entry.node_id || entry.ancestors.contains(&mentor_id) {
                    continue;
                }
                let cr2 = entry.cr2 * cr1;
                if cr2 < config.cr2_halt {
                    continue;
                }
                let ancestors = child_ancestors
                    .get_or_insert_with(|| {
                        let mut set = (*entry.ancestors).clone();
                        set.insert(entry.node_id);
                        Arc::new(set)
                    })
                    .clone();

                let record_idx = run.records.len() as u32;
                run.records.push(PathRecord {
                    start: entry.start.to_string(),
                    generation: gen,
                    node: mentor_arc.to_string(),
                    parent: entry.node.to_string(),
                    cr1,
                    cr2,
                });
                run.parent_links.push(entry.record_idx);
                emitted += 1;
                cr1_sum += cr1;
                cr2_sum += cr2;
                min_cr2 = Some(min_cr2.map_or(cr2, |m: f64| m.min(cr2)));

                next.push(Entry {
                    node: Arc::clone(&mentor_arc),
                    node_id: mentor_id,
                    parent: Arc::clone(&entry.node),
                    start: Arc::clone(&entry.start),
                    cr2,
                    ancestors,
                    record_idx: Some(record_idx),
                });
            }
        }

        sort_frontier(&mut next, config.prune_order);
        next.truncate(config.fs);

        run.summary.generations.push(GenerationStats {
            generation: gen,
            queries,
            records: emitted,
            vote_failures: failures,
            dont_care_blocks: dont_cares,
            mean_cr1: (emitted > 0).then(|| cr1_sum / emitted as f64),
            mean_cr2: (emitted > 0).then(|| cr2_sum / emitted as f64),
            min_cr2,
            frontier_after_prune: next.len(),
        });
        frontier = next;
    }

    run.summary.total_records = run.records.len() as u64;
    Ok(run)
}

/// Canonical frontier order; ties beyond the criterion keep insertion order
/// (the sort is stable), so the whole traversal is deterministic.
fn sort_frontier(entries: &mut [Entry], order: PruneOrder) {
    match order {
        PruneOrder::DescendingCr2 => entries.sort_by(|a, b| {
            b.cr2
                .total_cmp(&a.cr2)
                .then_with(|| a.node.cmp(&b.node))
                .then_with(|| a.parent.cmp(&b.parent))
        }),
        PruneOrder::Lexicographic => {
            entries.sort_by(|a, b| a.node.cmp(&b.node).then_with(|| a.parent.cmp(&b.parent)))
        }
    }
}

/// Votes per node over plain records.
pub fn node_votes(records: &[PathRecord]) -> BTreeMap<String, u64> {
    let mut votes = BTreeMap::new();
    for r in records {
        *votes.entry(r.node.clone()).or_insert(0) += 1;
    }
    votes
}

#[derive(Debug, Clone, Serialize)]
pub struct NodeVotes {
    pub node: String,
    pub votes: u64,
}

/// A node whose path-count tally differs between the two traces.
#[derive(Debug, Clone, Serialize)]
pub struct VoteDifference {
    pub node: String,
    pub a_votes: u64,
    pub b_votes: u64,
}

/// Divergence between two traces over the same graph and starts.
#[derive(Debug, Clone, Serialize)]
pub struct DivergenceReport {
    pub a_records: u64,
    pub b_records: u64,
    /// Total multiset symmetric difference of record rows.
    pub symmetric_difference: u64,
    pub a_only: u64,
    pub b_only: u64,
    /// Jaccard index of the node sets named by the two traces.
    pub node_jaccard: f64,
    pub top_a: Vec<NodeVotes>,
    pub top_b: Vec<NodeVotes>,
    /// Every node whose tallies disagree, largest absolute gap first.
    pub vote_differences: Vec<VoteDifference>,
}

impl DivergenceReport {
    pub fn is_identical(&self) -> bool {
        self.symmetric_difference == 0
    }
}

type RecordKey = (String, u32, String, String, String, String);

fn record_key(r: &PathRecord) -> RecordKey {
    // CR values participate at wire precision (9 decimals), matching the
    // CSV round trip.
    (
        r.start.clone(),
        r.generation,
        r.node.clone(),
        r.parent.clone(),
        format!("{:.9}", r.cr1),
        format!("{:.9}", r.cr2),
    )
}

/// Multiset comparison plus per-node vote tallies.
pub fn compare_traces(a: &[PathRecord], b: &[PathRecord], top_k: usize) -> DivergenceReport {
    let mut counts: HashMap<RecordKey, i64> = HashMap::new();
    for r in a {
        *counts.entry(record_key(r)).or_insert(0) += 1;
    }
    for r in b {
        *counts.entry(record_key(r)).or_insert(0) -= 1;
    }
    let a_only: i64 = counts.values().filter(|&&c| c > 0).sum();
    let b_only: i64 = -counts.values().filter(|&&c| c < 0).sum::<i64>();

    let nodes_a: BTreeSet<&str> = a.iter().map(|r| r.node.as_str()).collect();
    let nodes_b: BTreeSet<&str> = b.iter().map(|r| r.node.as_str()).collect();
    let intersection = nodes_a.intersection(&nodes_b).count();
    let union = nodes_a.union(&nodes_b).count();
    let jaccard = if union == 0 {
        1.0
    } else {
        intersection as f64 / union as f64
    };

    let votes_a = node_votes(a);
    let votes_b = node_votes(b);
    let mut vote_differences: Vec<VoteDifference> = Vec::new();
    for node in nodes_a.union(&nodes_b) {
        let av = votes_a.get(*node).copied().unwrap_or(0);
        let bv = votes_b.get(*node).copied().unwrap_or(0);
        if av != bv {
            vote_differences.push(VoteDifference {
                node: node.to_string(),
                a_votes: av,
                b_votes: bv,
            });
        }
    }
    vote_differences.sort_by(|x, y| {
        let gx = x.a_votes.abs_diff(x.b_votes);
        let gy = y.a_votes.abs_diff(y.b_votes);
        gy.cmp(&gx).then_with(|| x.node.cmp(&y.node))
    });

    DivergenceReport {
        a_records: a.len() as u64,
        b_records: b.len() as u64,
        symmetric_difference: (a_only + b_only) as u64,
        a_only: a_only as u64,
        b_only: b_only as u64,
        node_jaccard: jaccard,
        top_a: top_votes(a, top_k),
        top_b: top_votes(b, top_k),
        vote_differences,
    }
}

/// Top-k nodes by vote count, ties by name.
pub fn top_votes(records: &[PathRecord], k: usize) -> Vec<NodeVotes> {
    let votes = node_votes(records);
    let mut rows: Vec<NodeVotes> = votes
        .into_iter()
        .map(|(node, votes)| NodeVotes { node, votes })
        .collect();
    rows.sort_by(|a, b| b.votes.cmp(&a.votes).then_with(|| a.node.cmp(&b.node)));
    rows.truncate(k);
    rows
}

/// Writes `start,generation,node,parent,cr1,cr2` rows, CR values at 9
/// decimals.
pub fn write_records_csv(path: &Path, records: &[PathRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["start", "generation", "node", "parent", "cr1", "cr2"])
        .map_err(|e| Error::Format(e.to_string()))?;
    for r in records {
        let generation = r.generation.to_string();
        let cr1 = format!("{:.9}", r.cr1);
        let cr2 = format!("{:.9}", r.cr2);
        w.write_record([
            r.start.as_str(),
            generation.as_str(),
            r.node.as_str(),
            r.parent.as_str(),
            cr1.as_str(),
            cr2.as_str(),
        ])
        .map_err(|e| Error::Format(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records_csv(path: &Path) -> Result<Vec<PathRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers().map_err(|e| Error::Format(e.to_string()))?;
    let want = ["start", "generation", "node", "parent", "cr1", "cr2"];
    let got: Vec<&str> = headers.iter().collect();
    if got != want {
        return Err(Error::Format(format!(
            "expected header `{}`, got `{}`",
            want.join(","),
            got.join(",")
        )));
    }
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let parse_err = |msg: &str| Error::Parse {
            line,
            msg: msg.to_string(),
        };
        if rec.len() != 6 {
            return Err(parse_err("expected 6 fields"));
        }
        records.push(PathRecord {
            start: rec[0].to_string(),
            generation: rec[1].parse().map_err(|_| parse_err("bad generation"))?,
            node: rec[2].to_string(),
            parent: rec[3].to_string(),
            cr1: rec[4].parse().map_err(|_| parse_err("bad cr1"))?,
            cr2: rec[5].parse().map_err(|_| parse_err("bad cr2"))?,
        });
    }
    Ok(records)
}
