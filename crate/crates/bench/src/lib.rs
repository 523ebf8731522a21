//! Criterion benchmarks for retrieval, matching and single-query gating.
//! Run them with `cargo bench -p posegate-bench`.
