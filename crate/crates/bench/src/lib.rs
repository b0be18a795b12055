//! Benchmarks for the narrascope engine live in `benches/`.
