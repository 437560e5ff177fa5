//! `vacoal` command line: fixture generation, graph ingestion and
//! purification, memory construction, tracing, oracle comparison, semantic
//! analysis, configuration sweeps and bound calculations.
//!
//! Every run is deterministic in its inputs: identical config and files
//! produce byte-identical outputs. Failures print a machine-readable JSON
//! line to stderr and exit with 1 (config), 2 (I/O or parse) or 3 (domain).

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use vacoal::error::Error;

#[derive(Parser)]
#[command(
    name = "vacoal",
    version,
    about = "Block-partitioned associative memory pipeline"
)]
struct Cli {
    /// Flat key-value config file (defaults overridden by flags).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Cap on worker threads for parallel sections.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)] // parsed once at startup
enum Command {
    /// Generate a synthetic layered DAG fixture (edges, predicates, starts).
    GenDag(GenDagArgs),
    /// Parse an edge CSV and report row statistics.
    Ingest(IngestArgs),
    /// Remove mutual edge pairs; write the purified list and a JSON report.
    Purify(PurifyArgs),
    /// Learn a purified edge list into a memory snapshot.
    Learn(LearnArgs),
    /// Trace genealogies through a learned snapshot.
    Trace(TraceArgs),
    /// Reference map-based traversal over the edge list alone.
    Oracle(OracleArgs),
    /// Compare two record files (multiset difference, tallies, Jaccard).
    Compare(CompareArgs),
    /// Giant scores, era windows, indicators and hub profiles.
    Analyze(AnalyzeArgs),
    /// Learn + trace across (blocks, depth) pairs at fixed total capacity.
    Sweep(SweepArgs),
    /// Closed-form noise and decay numbers for a configuration.
    Bounds(BoundsArgs),
}

#[derive(Args)]
struct GenDagArgs {
    #[arg(long, default_value_t = 1000)]
    nodes: usize,
    #[arg(long, default_value_t = 3)]
    max_out: usize,
    #[arg(long, default_value_t = 12)]
    depth: usize,
    /// Planted mutual pairs (2-cycles) for purification fixtures.
    #[arg(long, default_value_t = 0)]
    mutual_pairs: usize,
    /// Start nodes to emit, drawn from the youngest layer.
    #[arg(long, default_value_t = 8)]
    starts_count: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    edges: PathBuf,
}

#[derive(Args)]
struct PurifyArgs {
    #[arg(long)]
    edges: PathBuf,
    #[arg(long, default_value = "purified.csv")]
    out: PathBuf,
    #[arg(long, default_value = "purify_report.json")]
    report: PathBuf,
}

#[derive(Args)]
struct LearnArgs {
    /// Purified edge CSV.
    #[arg(long)]
    edges: PathBuf,
    #[arg(long, default_value = "memory.bin")]
    snapshot: PathBuf,
    #[arg(long)]
    l: Option<usize>,
    #[arg(long)]
    blocks: Option<usize>,
    /// Depth exponent m (2^m cells per block).
    #[arg(long)]
    depth_exp: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// Rescue sampling rate in [0, 1]; 0 disables the rescue table.
    #[arg(long)]
    rr: Option<f64>,
}

#[derive(Args)]
struct TraceArgs {
    #[arg(long)]
    snapshot: PathBuf,
    /// Purified edge CSV (out-degree source).
    #[arg(long)]
    edges: PathBuf,
    /// Start nodes, one id per line.
    #[arg(long)]
    starts: PathBuf,
    #[arg(long, default_value = "records.csv")]
    records_out: PathBuf,
    #[arg(long, default_value = "summary.json")]
    summary_out: PathBuf,
    #[arg(long)]
    fs: Option<usize>,
    #[arg(long)]
    max_depth: Option<u32>,
    #[arg(long)]
    cr2_halt: Option<f64>,
    /// rescue | dont_care
    #[arg(long)]
    mode: Option<String>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    edges: PathBuf,
    #[arg(long)]
    starts: PathBuf,
    #[arg(long, default_value = "oracle_records.csv")]
    records_out: PathBuf,
    #[arg(long)]
    summary_out: Option<PathBuf>,
    #[arg(long)]
    fs: Option<usize>,
    #[arg(long)]
    max_depth: Option<u32>,
    #[arg(long)]
    cr2_halt: Option<f64>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long, default_value = "compare.json")]
    out: PathBuf,
    #[arg(long)]
    top_k: Option<usize>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Trace records CSV (vote tallies, giant scores).
    #[arg(long)]
    records: PathBuf,
    #[arg(long)]
    predicates: PathBuf,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Snapshot + edges + starts enable hub traffic profiles (the trace is
    /// re-run in memory to recover path identity).
    #[arg(long)]
    snapshot: Option<PathBuf>,
    #[arg(long)]
    edges: Option<PathBuf>,
    #[arg(long)]
    starts: Option<PathBuf>,
    /// Hub nodes to profile; default is the top-voted node.
    #[arg(long)]
    hubs: Option<String>,
    #[arg(long, default_value_t = 10)]
    up_gens: usize,
    #[arg(long, default_value_t = 10)]
    down_gens: usize,
    #[arg(long)]
    concept_members: Option<String>,
    #[arg(long)]
    concept_name: Option<String>,
    #[arg(long)]
    concept_role: Option<String>,
    #[arg(long)]
    era_field: Option<String>,
    #[arg(long)]
    pre_end: Option<i64>,
    #[arg(long)]
    post_start: Option<i64>,
    #[arg(long)]
    window_start: Option<i64>,
    #[arg(long)]
    window_end: Option<i64>,
    #[arg(long)]
    window_width: Option<i64>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    fs: Option<usize>,
    #[arg(long)]
    max_depth: Option<u32>,
    #[arg(long)]
    cr2_halt: Option<f64>,
    #[arg(long)]
    mode: Option<String>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    edges: PathBuf,
    #[arg(long)]
    starts: PathBuf,
    #[arg(long, default_value = "sweep.json")]
    out: PathBuf,
    /// Total capacity exponent: every config keeps blocks * 2^m = 2^cap.
    #[arg(long, default_value_t = 23)]
    cap_log2: u32,
    #[arg(long, default_value = "64,128,256,512,1024")]
    blocks_list: String,
    #[arg(long)]
    l: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rr: Option<f64>,
    #[arg(long)]
    fs: Option<usize>,
    #[arg(long)]
    max_depth: Option<u32>,
    #[arg(long)]
    cr2_halt: Option<f64>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    top_k: Option<usize>,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long)]
    blocks: Option<u64>,
    #[arg(long)]
    depth_exp: Option<u32>,
    /// Address-space size per block, overriding 2^depth_exp - 1.
    #[arg(long)]
    address_space: Option<f64>,
    #[arg(long)]
    cr1: Option<f64>,
    #[arg(long)]
    gens: Option<u32>,
    #[arg(long, default_value = "bounds.json")]
    out: PathBuf,
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 1,
        Error::Io(_) | Error::Parse { .. } | Error::Format(_) => 2,
        _ => 3,
    }
}

fn error_kind(e: &Error) -> &'static str {
    match exit_code(e) {
        1 => "config",
        2 => "io",
        _ => "domain",
    }
}

fn main() {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        let threads = threads.max(1);
        // Ignore the error when a pool already exists (tests call run twice).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }

    let result = run(cli);
    if let Err(e) = result {
        let payload = serde_json::json!({
            "error": e.to_string(),
            "kind": error_kind(&e),
        });
        eprintln!("{payload}");
        std::process::exit(exit_code(&e));
    }
}

fn run(cli: Cli) -> vacoal::Result<()> {
    let cfg = config::RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::GenDag(args) => commands::gen_dag(&cfg, args),
        Command::Ingest(args) => commands::ingest(args),
        Command::Purify(args) => commands::purify(args),
        Command::Learn(args) => commands::learn(&cfg, args),
        Command::Trace(args) => commands::trace(&cfg, args),
        Command::Oracle(args) => commands::oracle(&cfg, args),
        Command::Compare(args) => commands::compare(&cfg, args),
        Command::Analyze(args) => commands::analyze(&cfg, args),
        Command::Sweep(args) => commands::sweep(&cfg, args),
        Command::Bounds(args) => commands::bounds(&cfg, args),
    }
}
