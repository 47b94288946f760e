//! The conditioned ladder percolation environment.
//!
//! A configuration is stored column by column. Column `i` owns the slab
//! `(h0, h1, v)`: the two horizontal edges arriving at `i` from `i − 1` and
//! the vertical rung at `i`. The backwards-communicating state `T_i` records
//! which of `(i,0)`, `(i,1)` can reach `−∞` without exceeding column `i`.

mod annotate;
mod config;
mod sample;
mod snapshot;
mod transfer;

pub use annotate::{annotate, TrapPiece};
pub use config::LadderConfig;
pub use sample::{
    sample_cycle_stationary, sample_cycle_stationary_two_sided, sample_environment_chain,
    sample_environment_rejection, RejectionOptions, DEFAULT_REJECTION_BUDGET,
};
pub use snapshot::{read_snapshot, write_dump, write_snapshot, SNAPSHOT_MAGIC, SNAPSHOT_VERSION};
pub use transfer::{build_transfer_matrix, TransferMatrix};

use serde::{Deserialize, Serialize};

/// A vertex `(x, y)` of the ladder, `y ∈ {0, 1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Vertex {
    pub x: i64,
    pub y: u8,
}

impl Vertex {
    pub const ORIGIN: Vertex = Vertex { x: 0, y: 0 };

    pub fn new(x: i64, y: u8) -> Self {
        debug_assert!(y < 2, "level must be 0 or 1");
        Self { x, y: y & 1 }
    }

    pub fn partner(self) -> Self {
        Self { x: self.x, y: self.y ^ 1 }
    }
}

/// The three edges introduced at a column, packed as bit 0 = `h0`,
/// bit 1 = `h1`, bit 2 = `v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Slab(u8);

impl Slab {
    pub const H0: u8 = 0b001;
    pub const H1: u8 = 0b010;
    pub const V: u8 = 0b100;

    /// Both horizontals open, vertical closed: the pattern that extends a trap.
    pub const TRAP_BODY: Slab = Slab(Self::H0 | Self::H1);
    /// Bottom horizontal only: the slab at a pre-regeneration column.
    pub const PRE_REGENERATION: Slab = Slab(Self::H0);
    pub const CLOSED: Slab = Slab(0);
    pub const OPEN: Slab = Slab(0b111);

    pub fn new(h0: bool, h1: bool, v: bool) -> Self {
        Slab(h0 as u8 | (h1 as u8) << 1 | (v as u8) << 2)
    }

    /// Builds a slab from the low three bits of `bits`.
    pub fn from_bits(bits: u8) -> Self {
        Slab(bits & 0b111)
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn h0(self) -> bool {
        self.0 & Self::H0 != 0
    }

    pub fn h1(self) -> bool {
        self.0 & Self::H1 != 0
    }

    /// Horizontal edge on level `y`.
    pub fn h(self, y: u8) -> bool {
        self.0 & (1 << (y & 1)) != 0
    }

    pub fn v(self) -> bool {
        self.0 & Self::V != 0
    }

    pub fn open_count(self) -> u32 {
        self.0.count_ones()
    }

    /// Percolation weight `p^{#open} (1 − p)^{3 − #open}`.
    pub fn weight(self, p: f64) -> f64 {
        let k = self.open_count() as i32;
        p.powi(k) * (1.0 - p).powi(3 - k)
    }

    /// Top–bottom reflection.
    pub fn flipped(self) -> Self {
        Slab::new(self.h1(), self.h0(), self.v())
    }

    pub fn all() -> impl Iterator<Item = Slab> {
        (0u8..8).map(Slab)
    }
}

/// Backwards-communicating pattern of a column: bit 0 for level 0, bit 1
/// for level 1. Written `ab` with `a` the level-0 bit, so `10` means only
/// `(i,0)` communicates backwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct TState(u8);

impl TState {
    pub const NONE: TState = TState(0);
    /// `10`: only the bottom vertex.
    pub const BOTTOM: TState = TState(1);
    /// `01`: only the top vertex.
    pub const TOP: TState = TState(2);
    /// `11`: both vertices.
    pub const BOTH: TState = TState(3);

    /// The three states that survive conditioning, in matrix order `01, 10, 11`.
    pub const LIVE: [TState; 3] = [TState::TOP, TState::BOTTOM, TState::BOTH];

    pub fn from_bits(bits: u8) -> Self {
        TState(bits & 0b11)
    }

    pub fn from_levels(bottom: bool, top: bool) -> Self {
        TState(bottom as u8 | (top as u8) << 1)
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn bottom(self) -> bool {
        self.0 & 1 != 0
    }

    pub fn top(self) -> bool {
        self.0 & 2 != 0
    }

    pub fn level(self, y: u8) -> bool {
        self.0 & (1 << (y & 1)) != 0
    }

    pub fn is_dead(self) -> bool {
        self.0 == 0
    }

    /// Position in [`TState::LIVE`], `None` for `00`.
    pub fn live_index(self) -> Option<usize> {
        match self.0 {
            2 => Some(0),
            1 => Some(1),
            3 => Some(2),
            _ => None,
        }
    }

    pub fn flipped(self) -> Self {
        TState::from_levels(self.top(), self.bottom())
    }

    /// The two-character label `ab`.
    pub fn label(self) -> &'static str {
        ["00", "10", "01", "11"][self.0 as usize]
    }
}

impl std::fmt::Display for TState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Deterministic update of the backwards-communicating state across a slab.
#[inline]
pub fn slab_update(ab: TState, eta: Slab) -> TState {
    let a = ab.bottom();
    let b = ab.top();
    let c = (eta.h0() && a) || (eta.v() && eta.h1() && b);
    let d = (eta.h1() && b) || (eta.v() && eta.h0() && a);
    TState::from_levels(c, d)
}
