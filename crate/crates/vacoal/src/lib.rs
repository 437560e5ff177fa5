//! An algebro-deterministic associative memory and the analysis stack built
//! on top of it.
//!
//! The engine stores labelled binary hypervectors in `B` independent memory
//! blocks. Each block diffuses its segment of the input through its own
//! degree-64 GF(2) LFSR into an `m`-bit address; retrieval is a majority vote
//! over the `B` cells read back. Collisions are either tolerated (a block
//! abstains from the vote, "Don't Care") or repaired through an exact-match
//! rescue table sampled at write time.
//!
//! On top of the memory sit:
//!
//! - a hypervector algebra (bind / bundle / Hamming metrics) for encoding
//!   role-value structures, in [`hv`];
//! - knowledge-graph ingestion and 2-cycle purification, in [`graph`];
//! - frontier-bounded multi-hop traversal with confidence tracking (CR1 per
//!   query, CR2 as the multiplicative path integral), plus a map-based
//!   oracle for equivalence testing, in [`search`];
//! - concept-affinity, traffic, entropy and bound calculators, in
//!   [`analysis`].
//!
//! Everything is deterministic: a single master seed reproduces token
//! codebooks, diffuser banks, synthetic fixtures and traces bit-for-bit.

pub mod analysis;
pub mod blockmem;
pub mod error;
pub mod galois;
pub mod graph;
pub mod hv;
pub mod rescue;
pub mod search;
pub mod snapshot;

mod rng;

pub use error::Error;

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;
