//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured values (run with `--nocapture` to see them). Tolerances are
//! pinned in code.

use std::collections::HashSet;
use std::path::Path;
use std::process::Command;

use vacoal::analysis::{bounds, bounds_for_space, continuity, giant_score, shannon_entropy};
use vacoal::blockmem::{majority_vote, BlockMemory, COLLISION};
use vacoal::galois::{avalanche_ensemble, DiffuserBank};
use vacoal::graph::{generate_dag, purify_dag, AdjacencyIndex, DagSpec, EdgeList};
use vacoal::hv::{bind, Hypervector, TokenCodebook};
use vacoal::rescue::{finalize, RescueBuffer, RescueRate};
use vacoal::search::{
    compare_traces, edge_key, learn_graph, node_votes, oracle_trace, trace, SearchConfig,
    SearchMode,
};

fn pass(criterion: u32, name: &str, detail: String) {
    println!("ACCEPTANCE {criterion:02} {name}: PASS ({detail})");
}

/// Deterministic stream of test vectors.
fn hv_stream(seed: u64, len: usize) -> impl FnMut() -> Hypervector {
    let mut ctr = 0u64;
    move || {
        ctr += 1;
        Hypervector::from_seed(
            seed.wrapping_add(ctr.wrapping_mul(0x9E37_79B9_7F4A_7C15)),
            len,
        )
        .unwrap()
    }
}

#[test]
fn c01_reversibility() {
    const L: usize = 10_000;
    let mut next = hv_stream(101, L);
    for i in 0..1000 {
        let a = next();
        let b = next();
        let recovered = bind(&bind(&a, &b).unwrap(), &b).unwrap();
        assert_eq!(recovered, a, "pair {i} failed exact recovery");
    }
    pass(
        1,
        "reversibility",
        "1000 pairs at L=10000, bit-exact".into(),
    );
}

#[test]
fn c02_avalanche() {
    let mean = avalanche_ensemble(24, 100, 10_000, 20_240).unwrap();
    assert!(
        (0.47..=0.53).contains(&mean),
        "mean flip fraction {mean} outside [0.47, 0.53]"
    );
    pass(
        2,
        "avalanche",
        format!("mean flip fraction {mean:.4} over 10^4 trials at m=24"),
    );
}

#[test]
fn c03_majority_vote_robustness() {
    // 60 of 128 blocks corrupted with uniform tids from a 10^4-label space.
    let mut rng = vacoal_test_rng(33);
    let label_space = 10_000u64;
    let trials = 10_000;
    let mut correct = 0u32;
    for _ in 0..trials {
        let true_tid = (rng() % label_space) as i32;
        let mut votes = vec![true_tid; 68];
        for _ in 0..60 {
            votes.push((rng() % label_space) as i32);
        }
        if majority_vote(&votes).winner_tid == Some(true_tid) {
            correct += 1;
        }
    }
    assert!(correct >= 9999, "only {correct}/10000 correct");
    pass(
        3,
        "majority-vote robustness",
        format!("{correct}/10000 correct winners"),
    );
}

fn vacoal_test_rng(seed: u64) -> impl FnMut() -> u64 {
    let mut state = seed;
    move || {
        state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
}

#[test]
fn c04_chernoff_number() {
    let report = bounds_for_space(1000, 1000.0, 0.997, 56).unwrap();
    assert!(
        (report.ln_p_error - (-2606.0)).abs() <= 1.0,
        "ln(P_error) = {} not within -2606 +- 1",
        report.ln_p_error
    );
    assert!((report.ln_p_error - (-2606.3)).abs() < 0.1);
    pass(
        4,
        "Chernoff number",
        format!("ln(P_error) = {:.4}", report.ln_p_error),
    );
}

#[test]
fn c05_cr2_closed_form() {
    // One forced Don't-Care block per generation at B = 128, 10 generations.
    let blocks = 128usize;
    let m = 16u32;
    let l = blocks * 64;
    let seed = 500u64;
    let chain: Vec<(String, String)> = (0..10)
        .map(|i| (format!("c{i:02}"), format!("c{:02}", i + 1)))
        .collect();
    let edges = EdgeList::from_pairs(chain);
    let adjacency = AdjacencyIndex::build(&edges);
    let bank = DiffuserBank::for_dimensions(seed, blocks, m, l).unwrap();
    let codebook = TokenCodebook::new(seed, l).unwrap();
    let mut memory = BlockMemory::new(blocks, m).unwrap();
    learn_graph(&mut memory, &adjacency, &codebook, &bank, None).unwrap();
    // No natural collisions, so the poke below forces exactly one
    // Don't-Care block per generation.
    assert_eq!(memory.stats().collision_events, 0);
    for (student, _) in adjacency
        .students()
        .map(|(s, m)| (s.clone(), m))
        .collect::<Vec<_>>()
    {
        let key = edge_key(&codebook, &student, 0).unwrap();
        let addr = bank
            .diffuse(0, key.segment(0, bank.segment_bytes()))
            .unwrap();
        memory.poke_cell(0, addr, COLLISION);
    }

    let config = SearchConfig::new(SearchMode::DontCare, 8).unwrap();
    let run = trace(
        &memory,
        &bank,
        &codebook,
        None,
        &adjacency,
        &["c00".to_string()],
        &config,
    )
    .unwrap();
    assert_eq!(run.records.len(), 10);
    let c = 127.0 / 128.0;
    let measured = run.records[9].cr2;

    // The trace must land exactly on the iterated product of 127/128 ...
    let prediction = bounds(blocks as u64, m, c, 10).unwrap().cr2_prediction;
    assert_eq!(measured, prediction, "trace CR2 != cr1^gens");
    assert!((measured - 0.924564).abs() < 1e-4, "CR2 = {measured}");
    // ... while the printed two-digit arithmetic (0.992^10 ~ 0.923) and the
    // 56-generation decay prediction hold at their stated tolerances.
    let rounded = bounds(blocks as u64, m, 0.992, 10).unwrap().cr2_prediction;
    assert!((rounded - 0.923).abs() < 1e-3, "0.992^10 = {rounded}");
    let decay = bounds(blocks as u64, m, 0.997, 56).unwrap().cr2_prediction;
    assert!((decay - 0.846).abs() < 1e-3, "0.997^56 = {decay}");
    pass(
        5,
        "CR2 closed form",
        format!("trace CR2 = {measured:.6} = (127/128)^10; 0.992^10 = {rounded:.4}; 0.997^56 = {decay:.4}"),
    );
}

#[test]
fn c06_rescue_degeneration() {
    let seed = 606u64;
    let spec = DagSpec {
        nodes: 10_000,
        max_out_degree: 3,
        depth: 30,
        seed,
        mutual_pairs: 0,
    };
    let raw = generate_dag(&spec).unwrap();
    let (clean, _) = purify_dag(&raw);
    let adjacency = AdjacencyIndex::build(&clean);

    let blocks = 64usize;
    let m = 16u32;
    let l = blocks * 64;
    let bank = DiffuserBank::for_dimensions(seed, blocks, m, l).unwrap();
    let codebook = TokenCodebook::new(seed, l).unwrap();
    let mut memory = BlockMemory::new(blocks, m).unwrap();
    let mut buffer = RescueBuffer::new();
    learn_graph(&mut memory, &adjacency, &codebook, &bank, Some(&mut buffer)).unwrap();
    let table = finalize(&buffer, RescueRate::new(1.0).unwrap(), seed);
    assert!(
        memory.stats().collision_events > 0,
        "fixture must exercise the rescue path"
    );

    let config = SearchConfig::new(SearchMode::Rescue, 2000).unwrap();
    let starts: Vec<String> = adjacency
        .students()
        .rev()
        .take(40)
        .map(|(s, _)| s.clone())
        .collect();
    let traced = trace(
        &memory,
        &bank,
        &codebook,
        Some(&table),
        &adjacency,
        &starts,
        &config,
    )
    .unwrap();
    let oracle = oracle_trace(&adjacency, &starts, &config).unwrap();
    let report = compare_traces(&traced.records, &oracle.records, 20);
    assert!(
        report.is_identical(),
        "symmetric difference {}",
        report.symmetric_difference
    );
    assert!(traced.records.iter().all(|r| r.cr1 == 1.0 && r.cr2 == 1.0));
    // The equivalence must hold under pruning pressure, not just on a
    // frontier that never fills.
    let max_frontier = traced
        .summary
        .generations
        .iter()
        .map(|g| g.frontier_after_prune)
        .max()
        .unwrap();
    assert_eq!(max_frontier, 2000, "frontier never reached the FS cap");
    pass(
        6,
        "rescue degeneration",
        format!(
            "{} records identical to oracle on 10^4-node DAG ({} collisions rescued)",
            report.a_records,
            memory.stats().collision_events
        ),
    );
}

#[test]
fn c07_giant_score_reproduction() {
    // A semantically close, heavily traversed hub versus a close but
    // rarely traversed node.
    let hub = giant_score(0.5686, 47, 54).unwrap();
    assert!((hub.g - 0.5973).abs() < 0.0005, "hub row g = {}", hub.g);
    let isolate = giant_score(0.5336, 4, 54).unwrap();
    assert!(
        (isolate.g - 0.0249).abs() < 0.0005,
        "isolate row g = {}",
        isolate.g
    );
    pass(
        7,
        "giant score reproduction",
        format!(
            "g(0.5686, 47/54) = {:.4}; g(0.5336, 4/54) = {:.4}",
            hub.g, isolate.g
        ),
    );
}

#[test]
fn c08_bipolar_identity() {
    const L: usize = 10_000;
    let mut next = hv_stream(808, L);
    for i in 0..10_000 {
        let a = next();
        let b = next();
        let (d, _) = vacoal::hv::hamming(&a, &b).unwrap();
        // Independent route: accumulate the +-1 inner product bit by bit.
        let mut ip: i64 = 0;
        for (x, y) in a.as_bytes().iter().zip(b.as_bytes()) {
            let agree = !(x ^ y);
            ip += 2 * agree.count_ones() as i64 - 8;
        }
        assert_eq!(L as i64 - 2 * d as i64, ip, "pair {i}");
    }
    pass(
        8,
        "bipolar identity",
        "D - 2d == <w,x> exact on 10^4 pairs".into(),
    );
}

#[test]
fn c09_purification() {
    let spec = DagSpec {
        nodes: 400,
        max_out_degree: 3,
        depth: 10,
        seed: 909,
        mutual_pairs: 5,
    };
    let edges = generate_dag(&spec).unwrap();
    let (clean, report) = purify_dag(&edges);
    assert_eq!(report.removed_pairs, 5);
    assert_eq!(report.removed_edges.len(), 10);
    let (clean2, report2) = purify_dag(&clean);
    assert_eq!(report2.removed_pairs, 0);
    assert!(report2.removed_edges.is_empty());
    assert_eq!(clean2, clean);
    pass(
        9,
        "purification",
        "5 planted pairs => 10 edges removed; second pass is a no-op".into(),
    );
}

#[test]
fn c10_occams_razor_divergence() {
    // One start, a 5-generation direct route and a 20-generation detour
    // (8 parallel feeders into one spine) to the same goal, one forced
    // Don't-Care per learned key.
    let blocks = 64usize;
    let m = 16u32;
    let l = blocks * 64;
    let seed = 1010u64;

    let mut pairs: Vec<(String, String)> = Vec::new();
    let direct = ["d1", "d2", "d3", "d4"];
    pairs.push(("start".into(), "d1".into()));
    for w in direct.windows(2) {
        pairs.push((w[0].into(), w[1].into()));
    }
    pairs.push(("d4".into(), "goal".into()));
    let feeders: Vec<String> = (0..8).map(|i| format!("e{i}")).collect();
    for f in &feeders {
        pairs.push(("start".into(), f.clone()));
        pairs.push((f.clone(), "w01".into()));
    }
    let spine: Vec<String> = (1..=18).map(|i| format!("w{i:02}")).collect();
    for w in spine.windows(2) {
        pairs.push((w[0].clone(), w[1].clone()));
    }
    pairs.push(("w18".into(), "goal".into()));

    let edges = EdgeList::from_pairs(pairs);
    let adjacency = AdjacencyIndex::build(&edges);
    let bank = DiffuserBank::for_dimensions(seed, blocks, m, l).unwrap();
    let codebook = TokenCodebook::new(seed, l).unwrap();
    let mut memory = BlockMemory::new(blocks, m).unwrap();
    let mut buffer = RescueBuffer::new();
    learn_graph(&mut memory, &adjacency, &codebook, &bank, Some(&mut buffer)).unwrap();
    let table = finalize(&buffer, RescueRate::new(1.0).unwrap(), seed);

    // Force one Don't-Care block per query.
    let students: Vec<(String, usize)> = adjacency
        .students()
        .map(|(s, ms)| (s.clone(), ms.len()))
        .collect();
    for (student, degree) in students {
        for j in 0..degree {
            let key = edge_key(&codebook, &student, j).unwrap();
            let addr = bank
                .diffuse(0, key.segment(0, bank.segment_bytes()))
                .unwrap();
            memory.poke_cell(0, addr, COLLISION);
        }
    }

    let starts = vec!["start".to_string()];
    let dc_config = SearchConfig::new(SearchMode::DontCare, 100)
        .unwrap()
        .with_cr2_halt(0.90)
        .unwrap();
    let dc_run = trace(
        &memory, &bank, &codebook, None, &adjacency, &starts, &dc_config,
    )
    .unwrap();
    let rescue_config = SearchConfig::new(SearchMode::Rescue, 100).unwrap();
    let rescue_run = trace(
        &memory,
        &bank,
        &codebook,
        Some(&table),
        &adjacency,
        &starts,
        &rescue_config,
    )
    .unwrap();

    let dc_votes = node_votes(&dc_run.records);
    let rescue_votes = node_votes(&rescue_run.records);
    let direct_nodes = ["d1", "d2", "d3", "d4"];
    let deep_detour: Vec<String> = (7..=18).map(|i| format!("w{i:02}")).collect();

    let votes_of = |votes: &std::collections::BTreeMap<String, u64>, node: &str| {
        votes.get(node).copied().unwrap_or(0)
    };
    // Don't-Care mode: every direct node outranks every deep detour node.
    let dc_direct_min = direct_nodes
        .iter()
        .map(|n| votes_of(&dc_votes, n))
        .min()
        .unwrap();
    let dc_deep_max = deep_detour
        .iter()
        .map(|n| votes_of(&dc_votes, n))
        .max()
        .unwrap();
    assert!(
        dc_direct_min > dc_deep_max,
        "dont_care: direct min {dc_direct_min} <= detour max {dc_deep_max}"
    );
    // Rescue mode ranks by raw traffic: the inverse strict ordering.
    let rescue_deep_min = deep_detour
        .iter()
        .map(|n| votes_of(&rescue_votes, n))
        .min()
        .unwrap();
    let rescue_direct_max = direct_nodes
        .iter()
        .map(|n| votes_of(&rescue_votes, n))
        .max()
        .unwrap();
    assert!(
        rescue_deep_min > rescue_direct_max,
        "rescue: detour min {rescue_deep_min} <= direct max {rescue_direct_max}"
    );
    pass(
        10,
        "Occam's-razor divergence",
        format!(
            "dont_care direct>={dc_direct_min} vs detour<={dc_deep_max}; rescue detour>={rescue_deep_min} vs direct<={rescue_direct_max}"
        ),
    );
}

#[test]
fn c11_entropy_and_continuity() {
    const L: usize = 10_000;
    let uniform: std::collections::BTreeMap<String, u64> =
        (0..8).map(|i| (format!("s{i}"), 7u64)).collect();
    let h = shannon_entropy(&uniform).unwrap();
    assert_eq!(h, 3.0);

    let book = TokenCodebook::new(1111, L).unwrap();
    let bundle_a = book
        .bundle(
            &(0..9)
                .map(|i| book.token(&format!("a{i}")))
                .collect::<Vec<_>>()
                .iter()
                .map(|t| t.as_ref())
                .collect::<Vec<_>>(),
        )
        .unwrap();
    assert_eq!(continuity(&bundle_a, &bundle_a).unwrap(), 1.0);

    let bundle_b = book
        .bundle(
            &(0..9)
                .map(|i| book.token(&format!("b{i}")))
                .collect::<Vec<_>>()
                .iter()
                .map(|t| t.as_ref())
                .collect::<Vec<_>>(),
        )
        .unwrap();
    let c = continuity(&bundle_a, &bundle_b).unwrap();
    let band = 5.0 / (L as f64).sqrt();
    assert!((c - 0.5).abs() < band, "random continuity {c}");
    pass(
        11,
        "entropy and continuity",
        format!("H(uniform-8) = 3.0; continuity(same) = 1.0; continuity(random) = {c:.4}"),
    );
}

#[test]
fn c12_pipeline_determinism() {
    let bin = env!("CARGO_BIN_EXE_vacoal");
    let dir = tempfile::tempdir().unwrap();

    let run_pipeline = |tag: &str| -> std::path::PathBuf {
        let work = dir.path().join(tag);
        std::fs::create_dir_all(&work).unwrap();
        let runs = [
            vec![
                "gen-dag",
                "--nodes",
                "800",
                "--depth",
                "16",
                "--mutual-pairs",
                "4",
                "--seed",
                "1212",
                "--out-dir",
                "fx",
            ],
            vec![
                "purify",
                "--edges",
                "fx/edges.csv",
                "--out",
                "fx/purified.csv",
                "--report",
                "fx/report.json",
            ],
            vec![
                "learn",
                "--edges",
                "fx/purified.csv",
                "--snapshot",
                "fx/mem.bin",
                "--l",
                "4096",
                "--blocks",
                "64",
                "--depth-exp",
                "14",
                "--seed",
                "1212",
                "--rr",
                "0.5",
            ],
            vec![
                "trace",
                "--snapshot",
                "fx/mem.bin",
                "--edges",
                "fx/purified.csv",
                "--starts",
                "fx/starts.txt",
                "--records-out",
                "fx/records.csv",
                "--summary-out",
                "fx/summary.json",
                "--mode",
                "dont_care",
                "--fs",
                "300",
            ],
            vec![
                "analyze",
                "--records",
                "fx/records.csv",
                "--predicates",
                "fx/predicates.csv",
                "--snapshot",
                "fx/mem.bin",
                "--edges",
                "fx/purified.csv",
                "--starts",
                "fx/starts.txt",
                "--out-dir",
                "fx/analysis",
                "--mode",
                "dont_care",
                "--fs",
                "300",
                "--pre-end",
                "1200",
                "--post-start",
                "1400",
                "--concept-members",
                "calculus,analysis,geometry",
            ],
        ];
        for args in runs {
            let out = Command::new(bin)
                .args(&args)
                .current_dir(&work)
                .env_remove("VACOAL_SEED")
                .output()
                .unwrap();
            assert!(
                out.status.success(),
                "step {:?} failed: {}",
                args.first(),
                String::from_utf8_lossy(&out.stderr)
            );
        }
        work
    };

    let a = run_pipeline("a");
    let b = run_pipeline("b");

    let mut compared = 0;
    let mut walk = |sub: &str| {
        let dir_a = a.join(sub);
        for entry in std::fs::read_dir(&dir_a).unwrap() {
            let entry = entry.unwrap();
            if entry.file_type().unwrap().is_file() {
                let rel = format!("{sub}/{}", entry.file_name().to_string_lossy());
                let bytes_a = std::fs::read(a.join(&rel)).unwrap();
                let bytes_b = std::fs::read(b.join(&rel)).unwrap();
                assert_eq!(bytes_a, bytes_b, "{rel} differs between runs");
                compared += 1;
            }
        }
    };
    walk("fx");
    walk("fx/analysis");
    assert!(compared >= 9, "only {compared} files compared");

    // The fixture step must also be self-identical on its own.
    let gen_a: HashSet<String> = std::fs::read_to_string(a.join("fx/edges.csv"))
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    assert!(gen_a.len() > 500);
    pass(
        12,
        "pipeline determinism",
        format!("{compared} files byte-identical across two runs"),
    );
    let _ = Path::new(bin);
}
