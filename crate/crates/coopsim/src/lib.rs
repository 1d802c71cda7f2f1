//! Deterministic execution model for cooperative GPU kernels.
//!
//! The crate provides a small kernel DSL with static validation, a pure
//! small-step transition system over kernel states, a cooperative scheduler
//! that tracks compute units and resource demands, master/slave barrier
//! protocols with resizing support, bundled irregular workloads with
//! sequential oracles, a discrete-event virtual-time simulator, and a bounded
//! explicit-state checker for small configurations.

pub mod barrier;
pub mod check;
pub mod program;
pub mod report;
pub mod sched;
pub mod sem;
pub mod sim;
pub mod workloads;

/// Scalar value type of the kernel DSL: all cells and variables are 64-bit
/// signed integers.
pub type Word = i64;
