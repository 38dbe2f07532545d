//! Benchmark-only crate; the measurements live in `benches/pipeline.rs`.
//!
//! Covered hot paths: the analytic leg kinematics round trip, one full
//! simulated evaluation pass, and the non-dominated sort of the optimizer.
