//! Throughput of the memory-backed trace against the map-based oracle on
//! the same graph. Wall-clock numbers are hardware-specific; nothing in
//! the test suite depends on them.

use criterion::{criterion_group, criterion_main, Criterion};

use vacoal::blockmem::BlockMemory;
use vacoal::galois::DiffuserBank;
use vacoal::graph::{generate_dag, purify_dag, AdjacencyIndex, DagSpec};
use vacoal::hv::TokenCodebook;
use vacoal::rescue::{finalize, RescueBuffer, RescueRate, RescueTable};
use vacoal::search::{learn_graph, oracle_trace, trace, SearchConfig, SearchMode};

struct Fixture {
    adjacency: AdjacencyIndex,
    memory: BlockMemory,
    bank: DiffuserBank,
    codebook: TokenCodebook,
    table: RescueTable,
    starts: Vec<String>,
}

fn fixture() -> Fixture {
    let seed = 11u64;
    let spec = DagSpec {
        nodes: 4000,
        max_out_degree: 3,
        depth: 20,
        seed,
        mutual_pairs: 0,
    };
    let (clean, _) = purify_dag(&generate_dag(&spec).unwrap());
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
    let starts: Vec<String> = adjacency
        .students()
        .rev()
        .take(16)
        .map(|(s, _)| s.clone())
        .collect();
    Fixture {
        adjacency,
        memory,
        bank,
        codebook,
        table,
        starts,
    }
}

fn bench_traces(c: &mut Criterion) {
    let fx = fixture();
    let config = SearchConfig::new(SearchMode::Rescue, 500).unwrap();

    c.bench_function("trace_rescue_fs500", |b| {
        b.iter(|| {
            trace(
                &fx.memory,
                &fx.bank,
                &fx.codebook,
                Some(&fx.table),
                &fx.adjacency,
                &fx.starts,
                &config,
            )
            .unwrap()
        })
    });

    let dc = SearchConfig::new(SearchMode::DontCare, 500).unwrap();
    c.bench_function("trace_dont_care_fs500", |b| {
        b.iter(|| {
            trace(
                &fx.memory,
                &fx.bank,
                &fx.codebook,
                None,
                &fx.adjacency,
                &fx.starts,
                &dc,
            )
            .unwrap()
        })
    });

    c.bench_function("oracle_fs500", |b| {
        b.iter(|| oracle_trace(&fx.adjacency, &fx.starts, &config).unwrap())
    });
}

criterion_group!(benches, bench_traces);
criterion_main!(benches);
