//! Criterion benchmarks for the lerwlab kernels live in `benches/`.
