//! Criterion benchmarks for the estimator pipeline; see `benches/`.
