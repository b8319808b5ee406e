//! Criterion benchmarks for sceneseg; see `benches/`.
