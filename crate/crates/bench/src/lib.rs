//! Criterion benchmarks for `bir-core`; see `benches/`.
