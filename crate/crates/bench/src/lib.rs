//! Criterion benchmarks for the simulator; see `benches/scenarios.rs`.
//!
//! ```text
//! cargo bench -p sdsim-bench
//! ```
