//! Benchmark-only crate; the suites live in `benches/`. Run with
//! `cargo bench -p gaitpriv-bench`.
