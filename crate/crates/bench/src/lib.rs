//! Criterion benchmarks for `ouq-core`; see `benches/`.
