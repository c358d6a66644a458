//! Empty library target; the crate exists for its Criterion benchmarks in
//! `benches/`.
