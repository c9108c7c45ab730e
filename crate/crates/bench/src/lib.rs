//! Criterion benchmarks for parseq live under `benches/`.
