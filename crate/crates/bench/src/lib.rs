//! Criterion benchmarks for the numerical kernels of `nonbloch-core`; see `benches/kernels.rs`.
