//! Biased random walk on the conditioned ladder percolation cluster:
//! environment samplers, the walk and its derivative structure,
//! regeneration statistics, and closed-form checks.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod environment;
pub mod error;
pub mod experiment;
pub mod params;
pub mod regeneration;
pub mod scalar;
pub mod seed;
pub mod stats;
pub mod walker;

pub use environment::{LadderConfig, Slab, TState, TransferMatrix, TrapPiece, Vertex};
pub use error::{LadderError, Result};
pub use params::ModelParams;
pub use scalar::Scalar;
pub use walker::{KernelTable, StepCounts, Trajectory};

/// Kernel tables in double and single precision.
pub type KernelTable64 = KernelTable<f64>;
pub type KernelTable32 = KernelTable<f32>;
/// Move terms in double and single precision.
pub type MoveTerms64 = walker::MoveTerms<f64>;
pub type MoveTerms32 = walker::MoveTerms<f32>;
