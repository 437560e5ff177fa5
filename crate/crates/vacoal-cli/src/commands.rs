//! Subcommand implementations. Each writes its declared artifacts and
//! prints a one-line JSON status to stdout.

use std::collections::HashMap;
use std::path::Path;

use serde::Serialize;

use vacoal::analysis::{
    self, build_concept, build_node_vector, era_indicators, giant_score, traffic_profile,
    window_signal, NodeVector, TrafficProfile,
};
use vacoal::blockmem::BlockMemory;
use vacoal::error::Error;
use vacoal::galois::DiffuserBank;
use vacoal::graph::{
    generate_dag, generate_predicates, ingest_edges, ingest_predicates, purify_dag,
    write_edges_csv, write_predicates_csv, AdjacencyIndex, DagSpec,
};
use vacoal::hv::TokenCodebook;
use vacoal::rescue::{finalize, RescueBuffer, RescueRate, RescueTable};
use vacoal::search::{
    self, compare_traces, learn_graph, node_votes, oracle_trace, read_records_csv, top_votes,
    write_records_csv, SearchConfig, SearchMode, TraceRun, TraceSummary,
};
use vacoal::snapshot;
use vacoal::Result;

use crate::config::{parse_mode, split_list, RunConfig};
use crate::{
    AnalyzeArgs, BoundsArgs, CompareArgs, GenDagArgs, IngestArgs, LearnArgs, OracleArgs,
    PurifyArgs, SweepArgs, TraceArgs,
};

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Format(format!("json encoding failed: {e}")))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn status(value: serde_json::Value) {
    println!("{value}");
}

fn read_starts(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path)?;
    let starts: Vec<String> = text
        .lines()
        .map(|l| l.trim())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.to_string())
        .collect();
    if starts.is_empty() {
        return Err(Error::EmptyInput("starts file has no node ids"));
    }
    Ok(starts)
}

pub fn gen_dag(cfg: &RunConfig, args: GenDagArgs) -> Result<()> {
    let spec = DagSpec {
        nodes: args.nodes,
        max_out_degree: args.max_out,
        depth: args.depth,
        seed: cfg.effective_seed(args.seed),
        mutual_pairs: args.mutual_pairs,
    };
    let edges = generate_dag(&spec)?;
    std::fs::create_dir_all(&args.out_dir)?;
    let edges_path = args.out_dir.join("edges.csv");
    write_edges_csv(&edges_path, &edges)?;

    let predicates_path = args.out_dir.join("predicates.csv");
    write_predicates_csv(&predicates_path, &generate_predicates(&spec))?;

    // Start nodes: the youngest end of the index range; every node above
    // layer 0 keeps its organic mentors through purification.
    let count = args.starts_count.min(spec.nodes.saturating_sub(1));
    let starts: Vec<String> = (spec.nodes - count..spec.nodes)
        .map(DagSpec::node_name)
        .collect();
    let starts_path = args.out_dir.join("starts.txt");
    std::fs::write(&starts_path, starts.join("\n") + "\n")?;

    status(serde_json::json!({
        "nodes": spec.nodes,
        "edges": edges.len(),
        "planted_pairs": spec.mutual_pairs,
        "edges_csv": edges_path,
        "predicates_csv": predicates_path,
        "starts_txt": starts_path,
    }));
    Ok(())
}

pub fn ingest(args: IngestArgs) -> Result<()> {
    let edges = ingest_edges(&args.edges)?;
    status(serde_json::json!({
        "edges": edges.len(),
        "duplicates_dropped": edges.duplicates_dropped,
    }));
    Ok(())
}

pub fn purify(args: PurifyArgs) -> Result<()> {
    let edges = ingest_edges(&args.edges)?;
    let (clean, report) = purify_dag(&edges);
    write_edges_csv(&args.out, &clean)?;
    write_json(&args.report, &report)?;
    status(serde_json::json!({
        "retained": report.retained_edges,
        "removed_pairs": report.removed_pairs,
        "removed_self_loops": report.removed_self_loops,
        "out": args.out,
        "report": args.report,
    }));
    Ok(())
}

struct Engine {
    memory: BlockMemory,
    bank: DiffuserBank,
    codebook: TokenCodebook,
    rescue: Option<RescueTable>,
    edges_learned: usize,
}

fn build_engine(
    adjacency: &AdjacencyIndex,
    l: usize,
    blocks: usize,
    depth_exp: u32,
    seed: u64,
    rr: f64,
) -> Result<Engine> {
    let bank = DiffuserBank::for_dimensions(seed, blocks, depth_exp, l)?;
    let codebook = TokenCodebook::new(seed, l)?;
    let mut memory = BlockMemory::new(blocks, depth_exp)?;
    let rate = RescueRate::new(rr)?;
    let mut buffer = (!rate.is_off()).then(RescueBuffer::new);
    let edges_learned = learn_graph(&mut memory, adjacency, &codebook, &bank, buffer.as_mut())?;
    let rescue = buffer.map(|buf| finalize(&buf, rate, seed));
    Ok(Engine {
        memory,
        bank,
        codebook,
        rescue,
        edges_learned,
    })
}

pub fn learn(cfg: &RunConfig, args: LearnArgs) -> Result<()> {
    let mut cfg = cfg.clone();
    if let Some(l) = args.l {
        cfg.l = l;
    }
    if let Some(b) = args.blocks {
        cfg.blocks = b;
    }
    if let Some(m) = args.depth_exp {
        cfg.depth_exp = m;
    }
    cfg.master_seed = cfg.effective_seed(args.seed);
    if let Some(rr) = args.rr {
        cfg.rr = rr;
    }
    cfg.validate_geometry()?;

    let edges = ingest_edges(&args.edges)?;
    let adjacency = AdjacencyIndex::build(&edges);
    let engine = build_engine(
        &adjacency,
        cfg.l,
        cfg.blocks,
        cfg.depth_exp,
        cfg.master_seed,
        cfg.rr,
    )?;
    snapshot::save(
        &args.snapshot,
        &engine.memory,
        &engine.bank,
        engine.rescue.as_ref(),
    )?;

    let stats = engine.memory.stats();
    status(serde_json::json!({
        "edges_learned": engine.edges_learned,
        "labels": engine.memory.labels().len(),
        "write_attempts": stats.write_attempts,
        "collision_events": stats.collision_events,
        "location_rate": stats.location_rate(engine.memory.total_cells()),
        "count_rate": stats.count_rate(),
        "rescue_table": engine.rescue.is_some(),
        "snapshot": args.snapshot,
    }));
    Ok(())
}

#[derive(Serialize)]
struct TraceReport<'a> {
    config: &'a SearchConfig,
    summary: &'a TraceSummary,
}

fn merged_search_config(
    cfg: &RunConfig,
    fs: Option<usize>,
    max_depth: Option<u32>,
    cr2_halt: Option<f64>,
    mode: Option<&str>,
) -> Result<SearchConfig> {
    let mode = match mode {
        Some(m) => parse_mode(m)?,
        None => cfg.mode,
    };
    SearchConfig::new(mode, fs.unwrap_or(cfg.fs))?
        .with_max_depth(max_depth.unwrap_or(cfg.max_depth))
        .with_cr2_halt(cr2_halt.unwrap_or(cfg.cr2_halt))
}

pub fn trace(cfg: &RunConfig, args: TraceArgs) -> Result<()> {
    let snap = snapshot::load(&args.snapshot)?;
    let edges = ingest_edges(&args.edges)?;
    let adjacency = AdjacencyIndex::build(&edges);
    let starts = read_starts(&args.starts)?;
    let search_config = merged_search_config(
        cfg,
        args.fs,
        args.max_depth,
        args.cr2_halt,
        args.mode.as_deref(),
    )?;
    if search_config.mode == SearchMode::Rescue && snap.rescue.is_none() {
        return Err(Error::Config(
            "rescue mode needs a snapshot learned with rr > 0".into(),
        ));
    }
    let codebook = TokenCodebook::new(snap.bank.master_seed(), snap.bank.total_bits())?;
    let run = search::trace(
        &snap.memory,
        &snap.bank,
        &codebook,
        snap.rescue.as_ref(),
        &adjacency,
        &starts,
        &search_config,
    )?;
    write_records_csv(&args.records_out, &run.records)?;
    write_json(
        &args.summary_out,
        &TraceReport {
            config: &search_config,
            summary: &run.summary,
        },
    )?;
    status(serde_json::json!({
        "records": run.records.len(),
        "generations": run.summary.generations.len(),
        "records_out": args.records_out,
        "summary_out": args.summary_out,
    }));
    Ok(())
}

pub fn oracle(cfg: &RunConfig, args: OracleArgs) -> Result<()> {
    let edges = ingest_edges(&args.edges)?;
    let adjacency = AdjacencyIndex::build(&edges);
    let starts = read_starts(&args.starts)?;
    let search_config = merged_search_config(
        cfg,
        args.fs,
        args.max_depth,
        args.cr2_halt,
        Some("dont_care"),
    )?;
    let run = oracle_trace(&adjacency, &starts, &search_config)?;
    write_records_csv(&args.records_out, &run.records)?;
    if let Some(summary_out) = &args.summary_out {
        write_json(
            summary_out,
            &TraceReport {
                config: &search_config,
                summary: &run.summary,
            },
        )?;
    }
    status(serde_json::json!({
        "records": run.records.len(),
        "records_out": args.records_out,
    }));
    Ok(())
}

pub fn compare(cfg: &RunConfig, args: CompareArgs) -> Result<()> {
    let a = read_records_csv(&args.a)?;
    let b = read_records_csv(&args.b)?;
    let report = compare_traces(&a, &b, args.top_k.unwrap_or(cfg.top_k));
    write_json(&args.out, &report)?;
    status(serde_json::json!({
        "identical": report.is_identical(),
        "symmetric_difference": report.symmetric_difference,
        "node_jaccard": report.node_jaccard,
        "out": args.out,
    }));
    Ok(())
}

#[derive(Serialize)]
struct AnalysisOutput<'a> {
    concept: &'a str,
    role: &'a str,
    max_paths: u64,
    top: Vec<search::NodeVotes>,
    windows: Vec<analysis::WindowSignal>,
    indicators: analysis::EraIndicators,
    profiles: Vec<TrafficProfile>,
    unknown_predicates: Vec<String>,
}

fn sanitize_filename(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

pub fn analyze(cfg: &RunConfig, args: AnalyzeArgs) -> Result<()> {
    let mut cfg = cfg.clone();
    if let Some(v) = args.concept_members.as_deref() {
        cfg.concept_members = split_list(v);
    }
    if let Some(v) = args.concept_name {
        cfg.concept_name = v;
    }
    if let Some(v) = args.concept_role {
        cfg.concept_role = v;
    }
    if let Some(v) = args.era_field {
        cfg.era_field = v;
    }
    if let Some(v) = args.pre_end {
        cfg.pre_end = v;
    }
    if let Some(v) = args.post_start {
        cfg.post_start = v;
    }
    if let Some(v) = args.window_start {
        cfg.window_start = v;
    }
    if let Some(v) = args.window_end {
        cfg.window_end = v;
    }
    if let Some(v) = args.window_width {
        cfg.window_width = v;
    }
    if let Some(v) = args.top_k {
        cfg.top_k = v;
    }

    let records = read_records_csv(&args.records)?;
    let predicates = ingest_predicates(&args.predicates)?;
    std::fs::create_dir_all(&args.out_dir)?;

    // The codebook must match the one the memory was learned with.
    let (seed, l, reloaded) = match &args.snapshot {
        Some(path) => {
            let snap = snapshot::load(path)?;
            (snap.bank.master_seed(), snap.bank.total_bits(), Some(snap))
        }
        None => (cfg.master_seed, cfg.l, None),
    };
    let codebook = TokenCodebook::new(seed, l)?;
    let concept = build_concept(&cfg.concept_name, &cfg.concept_members, &codebook)?;

    // Node vectors for every node that carries predicates.
    let mut vectors: HashMap<String, NodeVector> = HashMap::new();
    for node in predicates.nodes() {
        vectors.insert(
            node.clone(),
            build_node_vector(node, &predicates, &codebook)?,
        );
    }

    // Giant scores over the voted nodes.
    let votes = node_votes(&records);
    let max_paths = votes.values().copied().max().unwrap_or(0);
    let mut giant_rows = Vec::new();
    if max_paths > 0 {
        for (node, &paths) in &votes {
            let nv = match vectors.get(node) {
                Some(nv) => nv.clone(),
                None => build_node_vector(node, &predicates, &codebook)?,
            };
            let s = analysis::field_affinity(&nv.hv, &concept, &cfg.concept_role, &codebook)?;
            giant_rows.push((node.clone(), giant_score(s, paths, max_paths)?));
        }
        giant_rows.sort_by(|a, b| b.1.g.total_cmp(&a.1.g).then_with(|| a.0.cmp(&b.0)));
    }
    let giant_path = args.out_dir.join("giant.csv");
    {
        let mut w = csv::Writer::from_path(&giant_path)?;
        w.write_record(["node", "s", "s_hat", "t_hat", "g", "paths"])?;
        for (node, row) in &giant_rows {
            let fields = [
                node.clone(),
                format!("{:.9}", row.s),
                format!("{:.9}", row.s_hat),
                format!("{:.9}", row.t_hat),
                format!("{:.9}", row.g),
                row.paths.to_string(),
            ];
            w.write_record(&fields)?;
        }
        w.flush()?;
    }

    let all_vectors: Vec<NodeVector> = {
        let mut names: Vec<&String> = vectors.keys().collect();
        names.sort();
        names.iter().map(|n| vectors[*n].clone()).collect()
    };
    let windows = window_signal(
        &all_vectors,
        &predicates,
        &cfg.windows()?,
        &cfg.concept_name,
        &cfg.concept_role,
        &cfg.era_field,
        &codebook,
    )?;

    let indicators = era_indicators(
        &predicates,
        &codebook,
        &cfg.era_field,
        cfg.pre_end,
        cfg.post_start,
    )?;

    // Hub profiles need path identity, so the trace is re-run in memory
    // (deterministic, hence consistent with the records file).
    let mut profiles: Vec<TrafficProfile> = Vec::new();
    if let (Some(snap), Some(edges_path), Some(starts_path)) =
        (reloaded, args.edges.as_ref(), args.starts.as_ref())
    {
        let edges = ingest_edges(edges_path)?;
        let adjacency = AdjacencyIndex::build(&edges);
        let starts = read_starts(starts_path)?;
        let search_config = merged_search_config(
            &cfg,
            args.fs,
            args.max_depth,
            args.cr2_halt,
            args.mode.as_deref(),
        )?;
        if search_config.mode == SearchMode::Rescue && snap.rescue.is_none() {
            return Err(Error::Config(
                "rescue mode needs a snapshot learned with rr > 0".into(),
            ));
        }
        let run: TraceRun = search::trace(
            &snap.memory,
            &snap.bank,
            &codebook,
            snap.rescue.as_ref(),
            &adjacency,
            &starts,
            &search_config,
        )?;
        let hubs: Vec<String> = match args.hubs.as_deref() {
            Some(list) => split_list(list),
            None => top_votes(&run.records, 1)
                .into_iter()
                .map(|nv| nv.node)
                .collect(),
        };
        for hub in hubs {
            let profile = traffic_profile(&run, &hub, args.up_gens, args.down_gens);
            let bar_path = args
                .out_dir
                .join(format!("hourglass_{}.txt", sanitize_filename(&hub)));
            let mut bars = String::new();
            for (i, count) in profile.down_counts.iter().enumerate().rev() {
                bars.push_str(&format!("-{} {}\n", i + 1, count));
            }
            let through = run.records.iter().filter(|r| r.node == hub).count();
            bars.push_str(&format!("0 {through}\n"));
            for (i, count) in profile.up_counts.iter().enumerate() {
                bars.push_str(&format!("+{} {}\n", i + 1, count));
            }
            std::fs::write(&bar_path, bars)?;
            profiles.push(profile);
        }
    }

    let out = AnalysisOutput {
        concept: &cfg.concept_name,
        role: &cfg.concept_role,
        max_paths,
        top: top_votes(&records, cfg.top_k),
        windows,
        indicators,
        profiles,
        unknown_predicates: predicates.unknown_predicates.iter().cloned().collect(),
    };
    let json_path = args.out_dir.join("analysis.json");
    write_json(&json_path, &out)?;

    status(serde_json::json!({
        "giant_rows": giant_rows.len(),
        "max_paths": max_paths,
        "profiles": out.profiles.len(),
        "giant_csv": giant_path,
        "analysis_json": json_path,
    }));
    Ok(())
}

#[derive(Serialize)]
struct SweepTrajectoryPoint {
    generation: u32,
    mean_cr1: Option<f64>,
    mean_cr2: Option<f64>,
    min_cr2: Option<f64>,
    frontier: usize,
}

#[derive(Serialize)]
struct SweepRow {
    blocks: usize,
    depth_exp: u32,
    edges_learned: usize,
    location_rate: f64,
    count_rate: f64,
    records: u64,
    top: Vec<search::NodeVotes>,
    cr_trajectory: Vec<SweepTrajectoryPoint>,
}

pub fn sweep(cfg: &RunConfig, args: SweepArgs) -> Result<()> {
    let mut cfg = cfg.clone();
    if let Some(l) = args.l {
        cfg.l = l;
    }
    cfg.master_seed = cfg.effective_seed(args.seed);
    if let Some(rr) = args.rr {
        cfg.rr = rr;
    }
    if let Some(k) = args.top_k {
        cfg.top_k = k;
    }
    let search_config = merged_search_config(
        &cfg,
        args.fs,
        args.max_depth,
        args.cr2_halt,
        args.mode.as_deref(),
    )?;

    let edges = ingest_edges(&args.edges)?;
    let adjacency = AdjacencyIndex::build(&edges);
    let starts = read_starts(&args.starts)?;

    let block_sizes: Vec<usize> = split_list(&args.blocks_list)
        .iter()
        .map(|s| {
            s.parse()
                .map_err(|_| Error::Config(format!("bad block count `{s}`")))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for blocks in block_sizes {
        if !blocks.is_power_of_two() {
            return Err(Error::Config(format!(
                "block count {blocks} is not a power of two"
            )));
        }
        let log2b = blocks.trailing_zeros();
        if log2b >= args.cap_log2 {
            return Err(Error::Config(format!(
                "capacity 2^{} cannot host {} blocks",
                args.cap_log2, blocks
            )));
        }
        // Fixed total capacity: blocks * 2^m = 2^cap.
        let depth_exp = args.cap_log2 - log2b;
        let mut run_cfg = cfg.clone();
        run_cfg.blocks = blocks;
        run_cfg.depth_exp = depth_exp;
        run_cfg.validate_geometry()?;

        let engine = build_engine(
            &adjacency,
            run_cfg.l,
            blocks,
            depth_exp,
            run_cfg.master_seed,
            run_cfg.rr,
        )?;
        if search_config.mode == SearchMode::Rescue && engine.rescue.is_none() {
            return Err(Error::Config("rescue-mode sweep needs rr > 0".into()));
        }
        let run = search::trace(
            &engine.memory,
            &engine.bank,
            &engine.codebook,
            engine.rescue.as_ref(),
            &adjacency,
            &starts,
            &search_config,
        )?;
        let stats = engine.memory.stats();
        rows.push(SweepRow {
            blocks,
            depth_exp,
            edges_learned: engine.edges_learned,
            location_rate: stats.location_rate(engine.memory.total_cells()),
            count_rate: stats.count_rate(),
            records: run.records.len() as u64,
            top: top_votes(&run.records, cfg.top_k),
            cr_trajectory: run
                .summary
                .generations
                .iter()
                .map(|g| SweepTrajectoryPoint {
                    generation: g.generation,
                    mean_cr1: g.mean_cr1,
                    mean_cr2: g.mean_cr2,
                    min_cr2: g.min_cr2,
                    frontier: g.frontier_after_prune,
                })
                .collect(),
        });
    }
    write_json(&args.out, &rows)?;
    status(serde_json::json!({
        "configs": rows.len(),
        "out": args.out,
    }));
    Ok(())
}

pub fn bounds(cfg: &RunConfig, args: BoundsArgs) -> Result<()> {
    let blocks = args.blocks.unwrap_or(cfg.blocks as u64);
    let cr1 = args.cr1.unwrap_or(0.997);
    let gens = args.gens.unwrap_or(56);
    let report = match args.address_space {
        Some(space) => analysis::bounds_for_space(blocks, space, cr1, gens)?,
        None => analysis::bounds(blocks, args.depth_exp.unwrap_or(cfg.depth_exp), cr1, gens)?,
    };
    write_json(&args.out, &report)?;
    status(serde_json::json!({
        "ln_p_error": report.ln_p_error,
        "cr2_prediction": report.cr2_prediction,
        "out": args.out,
    }));
    Ok(())
}
