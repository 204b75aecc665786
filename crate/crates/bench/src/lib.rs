//! Criterion benchmarks for the hstream pipeline; see `benches/`.
