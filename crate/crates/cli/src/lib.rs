//! Driver for the potflow simulator: scene runs, rendering, scaling
//! benchmarks and the oracle validation suites.

pub mod commands;
pub mod suites;
