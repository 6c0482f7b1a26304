//! Criterion benchmarks for the exact solvers. Run with `cargo bench -p arena-bench`.
