//! Benchmarks for the analytic engines and the simulator; see `benches/engines.rs`.
