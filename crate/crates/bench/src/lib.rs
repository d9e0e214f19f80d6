//! Criterion benchmarks for stage application, the cone metric and the forward solver live in `benches/`.
