//! Criterion benchmarks for the detectors and scoring; see `benches/`.
