//! Criterion benchmarks for the hot loops of `viscohom-core`.
//!
//! Run with `cargo bench -p viscohom-bench`.
