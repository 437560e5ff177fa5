//! Semantic analysis over traces and predicate tables: composite node
//! vectors, concept affinity, Giant Score, traffic profiles, era-window
//! signals, entropy/continuity indicators and the theoretical-bounds
//! calculator.
//!
//! Role-value encoding: each attribute is stored as `bind(token(value),
//! token(role))`, with the value in the recoverable slot. Rebinding a
//! composite vector with the role token then yields something close to the
//! value token (exactly equal for a single-attribute node), which is what
//! affinity and window signals measure.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::Serialize;

use crate::error::Error;
use crate::graph::PredicateTable;
use crate::hv::{bind, similarity, Hypervector, TokenCodebook};
use crate::search::TraceRun;
use crate::Result;

/// A node's composite vector: the bundle of its role-value bindings, or the
/// bare node token when it has no predicates.
#[derive(Debug, Clone)]
pub struct NodeVector {
    pub node: String,
    pub hv: Hypervector,
}

pub fn build_node_vector(
    node: &str,
    predicates: &PredicateTable,
    codebook: &TokenCodebook,
) -> Result<NodeVector> {
    let pairs = predicates.pairs(node);
    let hv = if pairs.is_empty() {
        (*codebook.token(node)).clone()
    } else {
        let bindings: Vec<Hypervector> = pairs
            .iter()
            .map(|(role, value)| bind(&codebook.token(value), &codebook.token(role)))
            .collect::<Result<_>>()?;
        let refs: Vec<&Hypervector> = bindings.iter().collect();
        codebook.bundle(&refs)?
    };
    Ok(NodeVector {
        node: node.to_string(),
        hv,
    })
}

/// A named concept: the bundle of its member tokens.
#[derive(Debug, Clone)]
pub struct ConceptVector {
    pub name: String,
    pub member_tokens: Vec<String>,
    pub hv: Hypervector,
}

pub fn build_concept(
    name: &str,
    member_tokens: &[String],
    codebook: &TokenCodebook,
) -> Result<ConceptVector> {
    if member_tokens.is_empty() {
        return Err(Error::EmptyInput("concept with no member tokens"));
    }
    let members: Vec<std::sync::Arc<Hypervector>> =
        member_tokens.iter().map(|t| codebook.token(t)).collect();
    let refs: Vec<&Hypervector> = members.iter().map(|m| m.as_ref()).collect();
    let hv = codebook.bundle(&refs)?;
    Ok(ConceptVector {
        name: name.to_string(),
        member_tokens: member_tokens.to_vec(),
        hv,
    })
}

/// Unbinds `role` from the node vector and takes the maximum similarity to
/// any member token of the concept.
pub fn field_affinity(
    node_hv: &Hypervector,
    concept: &ConceptVector,
    role: &str,
    codebook: &TokenCodebook,
) -> Result<f64> {
    if concept.member_tokens.is_empty() {
        return Err(Error::EmptyInput("concept with no member tokens"));
    }
    let unbound = bind(node_hv, &codebook.token(role))?;
    let mut best = f64::NEG_INFINITY;
    for member in &concept.member_tokens {
        let s = similarity(&unbound, &codebook.token(member))?;
        if s > best {
            best = s;
        }
    }
    Ok(best)
}

/// Affinity rescaled away from the 0.5 noise floor, times normalised path
/// traffic.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GiantScore {
    pub s: f64,
    pub s_hat: f64,
    pub t_hat: f64,
    pub g: f64,
    pub paths: u64,
}

pub fn giant_score(s: f64, paths: u64, max_paths: u64) -> Result<GiantScore> {
    if max_paths == 0 {
        return Err(Error::UndefinedNormalization("max_paths is zero"));
    }
    if paths > max_paths {
        return Err(Error::Config(format!(
            "paths {paths} exceeds max_paths {max_paths}"
        )));
    }
    let s_hat = (s - 0.5).max(0.0) * 10.0;
    let t_hat = paths as f64 / max_paths as f64;
    Ok(GiantScore {
        s,
        s_hat,
        t_hat,
        g: s_hat * t_hat,
        paths,
    })
}

/// Per-generation path-position counts around a hub, in both directions.
#[derive(Debug, Clone, Serialize)]
pub struct TrafficProfile {
    pub node: String,
    /// Distinct nodes at mentor-direction offsets 1..=up_gens.
    pub up_counts: Vec<u64>,
    /// Distinct nodes at student-direction offsets 1..=down_gens.
    pub down_counts: Vec<u64>,
    pub up_mean: f64,
    pub down_mean: f64,
    /// down_mean / up_mean; `None` when the mentor side is empty.
    pub thickness_ratio: Option<f64>,
}

/// Counts the distinct path positions at each relative generation around
/// `node`, over every path that traverses it. Parent links carry the path
/// identity; flat record rows alone cannot attribute deep traffic to a hub
/// once paths interleave.
pub fn traffic_profile(
    run: &TraceRun,
    node: &str,
    up_gens: usize,
    down_gens: usize,
) -> TrafficProfile {
    let records = &run.records;
    let occurrences: Vec<usize> = records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.node == node)
        .map(|(i, _)| i)
        .collect();

    // Children index for the mentor-direction walk.
    let mut children: Vec<Vec<u32>> = vec![Vec::new(); records.len()];
    for (i, link) in run.parent_links.iter().enumerate() {
        if let Some(p) = link {
            children[*p as usize].push(i as u32);
        }
    }

    let mut up_sets: Vec<HashSet<&str>> = vec![HashSet::new(); up_gens];
    let mut frontier = occurrences.clone();
    for set in up_sets.iter_mut() {
        let mut next = Vec::new();
        for &idx in &frontier {
            for &c in &children[idx] {
                set.insert(records[c as usize].node.as_str());
                next.push(c as usize);
            }
        }
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }

    let mut down_sets: Vec<HashSet<&str>> = vec![HashSet::new(); down_gens];
    for &occ in &occurrences {
        let mut link = Some(occ);
        for set in down_sets.iter_mut() {
            match link {
                Some(idx) => {
                    set.insert(records[idx].parent.as_str());
                    link = run.parent_links[idx].map(|p| p as usize);
                }
                None => break,
            }
        }
    }

    let up_counts: Vec<u64> = up_sets.iter().map(|s| s.len() as u64).collect();
    let down_counts: Vec<u64> = down_sets.iter().map(|s| s.len() as u64).collect();
    let mean = |v: &[u64]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<u64>() as f64 / v.len() as f64
        }
    };
    let up_mean = mean(&up_counts);
    let down_mean = mean(&down_counts);
    TrafficProfile {
        node: node.to_string(),
        up_counts,
        down_counts,
        up_mean,
        down_mean,
        thickness_ratio: (up_mean > 0.0).then(|| down_mean / up_mean),
    }
}

/// Concept signal of one era window.
#[derive(Debug, Clone, Serialize)]
pub struct WindowSignal {
    pub start: i64,
    pub end: i64,
    pub members: u64,
    /// `None` when the window has no members (absent, not zero).
    pub signal: Option<f64>,
    /// Change versus the previous window, when both signals exist.
    pub delta: Option<f64>,
}

/// Per half-open `[start, end)` window: bundle the member node vectors,
/// unbind the role, measure similarity to the concept token.
pub fn window_signal(
    node_vectors: &[NodeVector],
    predicates: &PredicateTable,
    windows: &[(i64, i64)],
    concept_token: &str,
    role: &str,
    era_field: &str,
    codebook: &TokenCodebook,
) -> Result<Vec<WindowSignal>> {
    let token = codebook.token(concept_token);
    let mut out: Vec<WindowSignal> = Vec::with_capacity(windows.len());
    let mut prev: Option<f64> = None;
    for &(start, end) in windows {
        let members: Vec<&NodeVector> = node_vectors
            .iter()
            .filter(|nv| {
                predicates
                    .era_year(&nv.node, era_field)
                    .is_some_and(|y| y >= start && y < end)
            })
            .collect();
        let signal = if members.is_empty() {
            None
        } else {
            let refs: Vec<&Hypervector> = members.iter().map(|nv| &nv.hv).collect();
            let bundle = codebook.bundle(&refs)?;
            let unbound = bind(&bundle, &codebook.token(role))?;
            Some(similarity(&unbound, &token)?)
        };
        let delta = match (prev, signal) {
            (Some(p), Some(s)) => Some(s - p),
            _ => None,
        };
        out.push(WindowSignal {
            start,
            end,
            members: members.len() as u64,
            signal,
            delta,
        });
        if signal.is_some() {
            prev = signal;
        }
    }
    Ok(out)
}

/// Shannon entropy in bits of a count distribution.
pub fn shannon_entropy(counts: &BTreeMap<String, u64>) -> Result<f64> {
    let total: u64 = counts.values().sum();
    if total == 0 {
        return Err(Error::EmptyInput("entropy of all-zero counts"));
    }
    let mut h = 0.0;
    for &c in counts.values() {
        if c > 0 {
            let p = c as f64 / total as f64;
            h -= p * p.log2();
        }
    }
    Ok(h)
}

/// Similarity between two era-population bundles; 0.5 is the random-noise
/// baseline, 1.0 identical composition.
pub fn continuity(pre_bundle: &Hypervector, post_bundle: &Hypervector) -> Result<f64> {
    similarity(pre_bundle, post_bundle)
}

/// Count-ratio and continuity indicators for a Pre / Interim / Post era
/// split around a pivot figure.
#[derive(Debug, Clone, Serialize)]
pub struct EraIndicators {
    pub pre_scholars: u64,
    pub interim_scholars: u64,
    pub post_scholars: u64,
    pub pre_membership_mean: f64,
    pub interim_membership_mean: f64,
    pub post_membership_mean: f64,
    /// Post/Pre mean society memberships per scholar.
    pub society_explosion_ratio: Option<f64>,
    pub pre_distinct_employers: u64,
    pub post_distinct_employers: u64,
    /// Post/Pre distinct employer counts.
    pub hub_diversification_ratio: Option<f64>,
    pub field_continuity: Option<f64>,
    pub language_continuity: Option<f64>,
    pub employer_continuity: Option<f64>,
    /// Entropy of field/language/institution diversity in the Post era.
    pub influence_diffusion_entropy: Option<f64>,
}

/// Splits scholars into Pre (`year < pre_end`), Interim
/// (`pre_end <= year < post_start`) and Post (`year >= post_start`).
pub fn era_indicators(
    predicates: &PredicateTable,
    codebook: &TokenCodebook,
    era_field: &str,
    pre_end: i64,
    post_start: i64,
) -> Result<EraIndicators> {
    if pre_end > post_start {
        return Err(Error::Config(format!(
            "era split {pre_end}..{post_start} is inverted"
        )));
    }
    let mut eras: [Vec<&str>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for node in predicates.nodes() {
        let Some(year) = predicates.era_year(node, era_field) else {
            continue;
        };
        let idx = if year < pre_end {
            0
        } else if year < post_start {
            1
        } else {
            2
        };
        eras[idx].push(node.as_str());
    }

    let membership_mean = |nodes: &[&str]| {
        if nodes.is_empty() {
            0.0
        } else {
            let total: usize = nodes
                .iter()
                .map(|n| predicates.values(n, "MEMBER_OF").len())
                .sum();
            total as f64 / nodes.len() as f64
        }
    };
    let pre_mean = membership_mean(&eras[0]);
    let interim_mean = membership_mean(&eras[1]);
    let post_mean = membership_mean(&eras[2]);

    let distinct_employers = |nodes: &[&str]| {
        nodes
            .iter()
            .flat_map(|n| predicates.values(n, "EMPLOYER"))
            .collect::<BTreeSet<_>>()
            .len() as u64
    };
    let pre_emp = distinct_employers(&eras[0]);
    let post_emp = distinct_employers(&eras[2]);

    let era_bundle = |nodes: &[&str], predicate: &str| -> Result<Option<Hypervector>> {
        let tokens: Vec<std::sync::Arc<Hypervector>> = nodes
            .iter()
            .flat_map(|n| predicates.values(n, predicate))
            .map(|v| codebook.token(v))
            .collect();
        if tokens.is_empty() {
            return Ok(None);
        }
        let refs: Vec<&Hypervector> = tokens.iter().map(|t| t.as_ref()).collect();
        Ok(Some(codebook.bundle(&refs)?))
    };
    let continuity_of = |predicate: &str| -> Result<Option<f64>> {
        match (
            era_bundle(&eras[0], predicate)?,
            era_bundle(&eras[2], predicate)?,
        ) {
            (Some(pre), Some(post)) => Ok(Some(continuity(&pre, &post)?)),
            _ => Ok(None),
        }
    };

    let mut post_counts: BTreeMap<String, u64> = BTreeMap::new();
    for n in &eras[2] {
        for pred in ["FIELD", "LANGUAGE", "EMPLOYER"] {
            for v in predicates.values(n, pred) {
                *post_counts.entry(format!("{pred}:{v}")).or_insert(0) += 1;
            }
        }
    }
    let diffusion_entropy = if post_counts.is_empty() {
        None
    } else {
        Some(shannon_entropy(&post_counts)?)
    };

    Ok(EraIndicators {
        pre_scholars: eras[0].len() as u64,
        interim_scholars: eras[1].len() as u64,
        post_scholars: eras[2].len() as u64,
        pre_membership_mean: pre_mean,
        interim_membership_mean: interim_mean,
        post_membership_mean: post_mean,
        society_explosion_ratio: (pre_mean > 0.0).then(|| post_mean / pre_mean),
        pre_distinct_employers: pre_emp,
        post_distinct_employers: post_emp,
        hub_diversification_ratio: (pre_emp > 0).then(|| post_emp as f64 / pre_emp as f64),
        field_continuity: continuity_of("FIELD")?,
        language_continuity: continuity_of("LANGUAGE")?,
        employer_continuity: continuity_of("EMPLOYER")?,
        influence_diffusion_entropy: diffusion_entropy,
    })
}

/// Closed-form noise and decay numbers for a configuration.
#[derive(Debug, Clone, Serialize)]
pub struct BoundsReport {
    pub blocks: u64,
    /// Address-space size per block.
    pub address_space: f64,
    /// Per-block accidental-hit probability, `1 / address_space`.
    pub p: f64,
    /// Expected accidental votes, `blocks * p`.
    pub mu: f64,
    /// Majority threshold, `blocks / 2`.
    pub theta: f64,
    /// `theta = (1 + delta) * mu`.
    pub delta: f64,
    /// Log upper bound on the probability that noise reaches the majority
    /// threshold, from the simplified Chernoff form `(e/delta)^((1+delta)mu)`.
    pub ln_p_error: f64,
    /// Poisson `P(k)` for `k = 0..=theta` at rate `mu`.
    pub poisson: Vec<f64>,
    pub cr1: f64,
    pub gens: u32,
    /// `cr1^gens`, the multiplicative path-decay prediction.
    pub cr2_prediction: f64,
}

/// Bounds for a block memory of `blocks` blocks and `2^m - 1` addresses.
pub fn bounds(blocks: u64, m: u32, cr1: f64, gens: u32) -> Result<BoundsReport> {
    if m == 0 {
        return Err(Error::Config("depth exponent must be >= 1".into()));
    }
    bounds_for_space(blocks, (1u64 << m) as f64 - 1.0, cr1, gens)
}

/// Same computation with the address-space size given directly.
pub fn bounds_for_space(
    blocks: u64,
    address_space: f64,
    cr1: f64,
    gens: u32,
) -> Result<BoundsReport> {
    if blocks < 2 {
        return Err(Error::Config("need at least 2 blocks".into()));
    }
    if blocks > 16_000_000 {
        // The Poisson table holds blocks/2 entries.
        return Err(Error::Config(format!(
            "block count {blocks} too large for the tail table"
        )));
    }
    if address_space < 1.0 {
        return Err(Error::Config("address space must be >= 1".into()));
    }
    if !(cr1 > 0.0 && cr1 <= 1.0) {
        return Err(Error::Config(format!("cr1 {cr1} out of (0, 1]")));
    }
    let p = 1.0 / address_space;
    let mu = blocks as f64 * p;
    let theta = blocks as f64 / 2.0;
    let delta = theta / mu - 1.0;
    let ln_p_error = mu * (1.0 + delta) * (1.0 - delta.ln());

    let mut poisson = Vec::with_capacity(theta as usize + 1);
    let mut term = (-mu).exp();
    poisson.push(term);
    for k in 1..=theta as u64 {
        term *= mu / k as f64;
        poisson.push(term);
    }

    // Iterated product, matching the per-generation fold of the tracer
    // bit for bit.
    let mut cr2_prediction = 1.0f64;
    for _ in 0..gens {
        cr2_prediction *= cr1;
    }

    Ok(BoundsReport {
        blocks,
        address_space,
        p,
        mu,
        theta,
        delta,
        ln_p_error,
        poisson,
        cr1,
        gens,
        cr2_prediction,
    })
}
