//! Knowledge-graph ingestion and purification.
//!
//! Edges are `student,mentor` CSV rows. Purification removes every mutual
//! pair {(A,B), (B,A)} -- both directions -- so no 2-cycle survives into
//! the search space. Longer cycles are left alone here; per-path ancestor
//! sets neutralise them at traversal time.
//!
//! The module also hosts the predicate table (node attributes used by the
//! analysis layer) and a deterministic synthetic-DAG generator for
//! fixtures.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::rng::SplitMix;
use crate::Result;

/// Deduplicated directed edges, student -> mentor.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EdgeList {
    pub edges: Vec<(String, String)>,
    /// Exact duplicates dropped during ingestion.
    pub duplicates_dropped: usize,
}

impl EdgeList {
    /// Builds a list from raw pairs, dropping exact duplicates in first-seen
    /// order.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, String)>) -> Self {
        let mut seen = HashSet::new();
        let mut edges = Vec::new();
        let mut duplicates = 0;
        for (s, m) in pairs {
            if seen.insert((s.clone(), m.clone())) {
                edges.push((s, m));
            } else {
                duplicates += 1;
            }
        }
        EdgeList {
            edges,
            duplicates_dropped: duplicates,
        }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

/// Parses a `student,mentor` CSV file.
pub fn ingest_edges(path: &Path) -> Result<EdgeList> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    expect_headers(&headers, &["student", "mentor"])?;
    let mut pairs = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 2 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 2 fields, got {}", record.len()),
            });
        }
        pairs.push((record[0].to_string(), record[1].to_string()));
    }
    Ok(EdgeList::from_pairs(pairs))
}

/// Writes an edge list back out in the ingestion format.
pub fn write_edges_csv(path: &Path, edges: &EdgeList) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["student", "mentor"]).map_err(csv_err)?;
    for (s, m) in &edges.edges {
        w.write_record([s, m]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn expect_headers(headers: &csv::StringRecord, want: &[&str]) -> Result<()> {
    let got: Vec<&str> = headers.iter().collect();
    if got != want {
        return Err(Error::Format(format!(
            "expected header `{}`, got `{}`",
            want.join(","),
            got.join(",")
        )));
    }
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.kind() {
        csv::ErrorKind::Io(_) => Error::Format(e.to_string()),
        _ => Error::Parse {
            line,
            msg: e.to_string(),
        },
    }
}

/// What purification removed.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct PurificationReport {
    pub removed_pairs: usize,
    pub removed_self_loops: usize,
    pub removed_edges: Vec<(String, String)>,
    pub retained_edges: usize,
}

/// Removes both edges of every mutual pair (and any self-loops). The
/// operation is idempotent and retained + removed partitions the input.
pub fn purify_dag(edges: &EdgeList) -> (EdgeList, PurificationReport) {
    let index: HashSet<(&str, &str)> = edges
        .edges
        .iter()
        .map(|(s, m)| (s.as_str(), m.as_str()))
        .collect();

    let mut retained = Vec::new();
    let mut removed = Vec::new();
    for (s, m) in &edges.edges {
        if s == m || index.contains(&(m.as_str(), s.as_str())) {
            removed.push((s.clone(), m.clone()));
        } else {
            retained.push((s.clone(), m.clone()));
        }
    }

    let mut pairs = BTreeSet::new();
    let mut self_loops = 0;
    for (s, m) in &removed {
        if s == m {
            self_loops += 1;
        } else {
            let key = if s < m {
                (s.clone(), m.clone())
            } else {
                (m.clone(), s.clone())
            };
            pairs.insert(key);
        }
    }
    removed.sort();

    let report = PurificationReport {
        removed_pairs: pairs.len(),
        removed_self_loops: self_loops,
        removed_edges: removed,
        retained_edges: retained.len(),
    };
    (
        EdgeList {
            edges: retained,
            duplicates_dropped: 0,
        },
        report,
    )
}

/// Student -> ordered mentor list, plus the node universe.
#[derive(Debug, Clone, Default)]
pub struct AdjacencyIndex {
    mentors: BTreeMap<String, Vec<String>>,
    nodes: BTreeSet<String>,
}

impl AdjacencyIndex {
    /// Mentor order is lexicographic by id, so ordinal edge encoding is
    /// stable across runs.
    pub fn build(edges: &EdgeList) -> Self {
        let mut mentors: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut nodes = BTreeSet::new();
        for (s, m) in &edges.edges {
            mentors.entry(s.clone()).or_default().push(m.clone());
            nodes.insert(s.clone());
            nodes.insert(m.clone());
        }
        for list in mentors.values_mut() {
            list.sort();
            list.dedup();
        }
        AdjacencyIndex { mentors, nodes }
    }

    pub fn mentors(&self, node: &str) -> &[String] {
        self.mentors.get(node).map_or(&[], |v| v.as_slice())
    }

    pub fn out_degree(&self, node: &str) -> usize {
        self.mentors(node).len()
    }

    pub fn contains(&self, node: &str) -> bool {
        self.nodes.contains(node)
    }

    pub fn students(&self) -> impl DoubleEndedIterator<Item = (&String, &Vec<String>)> {
        self.mentors.iter()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &String> {
        self.nodes.iter()
    }

    pub fn edge_count(&self) -> usize {
        self.mentors.values().map(|v| v.len()).sum()
    }
}

/// Predicate names the analysis layer knows about; others are accepted but
/// flagged.
pub const KNOWN_PREDICATES: [&str; 6] = [
    "BIRTH_PLACE",
    "EMPLOYER",
    "ERA",
    "FIELD",
    "LANGUAGE",
    "MEMBER_OF",
];

/// node -> predicate -> value tokens, in file order per (node, predicate).
#[derive(Debug, Clone, Default)]
pub struct PredicateTable {
    nodes: BTreeMap<String, BTreeMap<String, Vec<String>>>,
    pub unknown_predicates: BTreeSet<String>,
    row_count: usize,
}

impl PredicateTable {
    pub fn insert(&mut self, node: &str, predicate: &str, value: &str) {
        if !KNOWN_PREDICATES.contains(&predicate) {
            self.unknown_predicates.insert(predicate.to_string());
        }
        self.nodes
            .entry(node.to_string())
            .or_default()
            .entry(predicate.to_string())
            .or_default()
            .push(value.to_string());
        self.row_count += 1;
    }

    pub fn values(&self, node: &str, predicate: &str) -> &[String] {
        self.nodes
            .get(node)
            .and_then(|p| p.get(predicate))
            .map_or(&[], |v| v.as_slice())
    }

    /// All (predicate, value) pairs of a node, predicate-sorted.
    pub fn pairs(&self, node: &str) -> Vec<(&str, &str)> {
        let mut out = Vec::new();
        if let Some(preds) = self.nodes.get(node) {
            for (p, values) in preds {
                for v in values {
                    out.push((p.as_str(), v.as_str()));
                }
            }
        }
        out
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    pub fn nodes(&self) -> impl Iterator<Item = &String> {
        self.nodes.keys()
    }

    pub fn has_node(&self, node: &str) -> bool {
        self.nodes.contains_key(node)
    }

    /// First value of the era predicate parsed as a year.
    pub fn era_year(&self, node: &str, era_field: &str) -> Option<i64> {
        self.values(node, era_field)
            .first()
            .and_then(|v| v.trim().parse().ok())
    }
}

/// Parses a `node,predicate,value` CSV file.
pub fn ingest_predicates(path: &Path) -> Result<PredicateTable> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    expect_headers(&headers, &["node", "predicate", "value"])?;
    let mut table = PredicateTable::default();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 3 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 3 fields, got {}", record.len()),
            });
        }
        table.insert(&record[0], &record[1], &record[2]);
    }
    Ok(table)
}

pub fn write_predicates_csv(path: &Path, rows: &[(String, String, String)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["node", "predicate", "value"])
        .map_err(csv_err)?;
    for (n, p, v) in rows {
        w.write_record([n, p, v]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Parameters of the synthetic layered-DAG generator.
#[derive(Debug, Clone)]
pub struct DagSpec {
    pub nodes: usize,
    pub max_out_degree: usize,
    pub depth: usize,
    pub seed: u64,
    /// Mutual pairs planted on top of the acyclic core, for purification
    /// fixtures.
    pub mutual_pairs: usize,
}

impl DagSpec {
    pub fn node_name(i: usize) -> String {
        format!("n{i:06}")
    }
}

/// Generates a layered DAG: node `i` sits on layer `i*depth/nodes`, and
/// every node above layer 0 draws 1..=max_out_degree mentors from the
/// three preceding layers (locality keeps traversal chains close to
/// `depth` generations long). Organic edges can never be mutual; planted
/// pairs are the only 2-cycles.
pub fn generate_dag(spec: &DagSpec) -> Result<EdgeList> {
    if spec.nodes < 2 || spec.depth < 2 || spec.depth > spec.nodes {
        return Err(Error::Config(format!(
            "need nodes >= 2 and 2 <= depth <= nodes, got nodes={} depth={}",
            spec.nodes, spec.depth
        )));
    }
    if spec.max_out_degree == 0 {
        return Err(Error::Config("max out-degree must be positive".into()));
    }
    let layer_of = |i: usize| i * spec.depth / spec.nodes;
    let mut layer_start = vec![spec.nodes; spec.depth];
    for i in (0..spec.nodes).rev() {
        layer_start[layer_of(i)] = i;
    }
    let mut rng = SplitMix::new(spec.seed);
    let mut pairs = Vec::new();
    for i in 0..spec.nodes {
        let layer = layer_of(i);
        if layer == 0 {
            continue;
        }
        let lo = layer_start[layer.saturating_sub(3)];
        let hi = layer_start[layer];
        let degree = 1 + rng.next_below(spec.max_out_degree as u64) as usize;
        let mut picked = BTreeSet::new();
        for _ in 0..degree {
            picked.insert(lo + rng.next_below((hi - lo) as u64) as usize);
        }
        for j in picked {
            pairs.push((DagSpec::node_name(i), DagSpec::node_name(j)));
        }
    }

    // Planted 2-cycles between distinct layers.
    let mut planted = BTreeSet::new();
    let mut guard = 0;
    while planted.len() < spec.mutual_pairs {
        guard += 1;
        if guard > 100_000 {
            return Err(Error::Config(
                "could not place the requested mutual pairs".into(),
            ));
        }
        let a = rng.next_below(spec.nodes as u64) as usize;
        let b = rng.next_below(spec.nodes as u64) as usize;
        if layer_of(a) == layer_of(b) {
            continue;
        }
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        planted.insert((lo, hi));
    }
    for (lo, hi) in planted {
        pairs.push((DagSpec::node_name(lo), DagSpec::node_name(hi)));
        pairs.push((DagSpec::node_name(hi), DagSpec::node_name(lo)));
    }

    Ok(EdgeList::from_pairs(pairs))
}

/// Deterministic node attributes for a generated DAG: an era year derived
/// from the layer plus field/language/institution draws, so the analysis
/// pipeline has something to chew on.
pub fn generate_predicates(spec: &DagSpec) -> Vec<(String, String, String)> {
    const FIELDS: [&str; 10] = [
        "algebra",
        "analysis",
        "anatomy",
        "astronomy",
        "calculus",
        "geometry",
        "logic",
        "medicine",
        "number_theory",
        "philosophy",
    ];
    const LANGUAGES: [&str; 6] = ["arabic", "english", "french", "german", "greek", "latin"];
    const EMPLOYERS: [&str; 8] = [
        "academy_a",
        "academy_b",
        "college_c",
        "college_d",
        "school_e",
        "school_f",
        "university_g",
        "university_h",
    ];
    const SOCIETIES: [&str; 4] = ["society_p", "society_q", "society_r", "society_s"];

    let mut rng = SplitMix::new(spec.seed ^ 0xA11A);
    let layer_of = |i: usize| i * spec.depth / spec.nodes;
    let mut rows = Vec::new();
    for i in 0..spec.nodes {
        let node = DagSpec::node_name(i);
        let layer = layer_of(i);
        // Layer 0 is the oldest stratum; later layers get later era years.
        let year = 1000 + (layer as i64) * 600 / spec.depth.max(1) as i64;
        rows.push((node.clone(), "ERA".to_string(), year.to_string()));
        let field = FIELDS[rng.next_below(FIELDS.len() as u64) as usize];
        rows.push((node.clone(), "FIELD".to_string(), field.to_string()));
        let lang = LANGUAGES[rng.next_below(LANGUAGES.len() as u64) as usize];
        rows.push((node.clone(), "LANGUAGE".to_string(), lang.to_string()));
        let emp = EMPLOYERS[rng.next_below(EMPLOYERS.len() as u64) as usize];
        rows.push((node.clone(), "EMPLOYER".to_string(), emp.to_string()));
        // Society membership becomes more common in later layers.
        if rng.next_below(spec.depth as u64) < layer as u64 {
            let soc = SOCIETIES[rng.next_below(SOCIETIES.len() as u64) as usize];
            rows.push((node.clone(), "MEMBER_OF".to_string(), soc.to_string()));
        }
    }
    rows
}
