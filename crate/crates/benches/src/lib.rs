//! Criterion benchmarks for srpo-core; see `benches/`.
