//! Benchmark-only crate. The measurements live in `benches/hot_paths.rs`;
//! run them with `cargo bench -p qcut-bench`.
