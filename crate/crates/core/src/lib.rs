//! LOCAL-model distributed computing simulator and deterministic distributed
//! fractional (p:q)-coloring algorithms, with exact verification oracles,
//! instance generators, a sinkless-orientation reduction and a benchmark
//! harness.

pub mod algo_grid;
pub mod algo_maxdeg;
pub mod algo_sparse;
pub mod coloring;
pub mod generators;
pub mod graph;
pub mod localsim;
pub mod primitives;
pub mod reduction;
