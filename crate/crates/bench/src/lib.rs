//! Criterion benchmarks for the marsbench kernels live in `benches/`.
