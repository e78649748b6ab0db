//! Criterion benchmarks for lfa-di-core live in `benches/`.
