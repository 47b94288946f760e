use serde::{Deserialize, Serialize};

use super::Move;
use crate::environment::{LadderConfig, Vertex};
use crate::params::ModelParams;

/// Side of the window through which a walk was stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryExit {
    Left,
    Right,
}

/// A walk path stored as 2-bit move codes, four per byte, least
/// significant pair first.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub params: ModelParams,
    pub start: Vertex,
    pub seed: u64,
    pub exit: Option<BoundaryExit>,
    packed: Vec<u8>,
    len: usize,
}

impl Trajectory {
    pub fn new(params: ModelParams, start: Vertex, seed: u64) -> Self {
        Self { params, start, seed, exit: None, packed: Vec::new(), len: 0 }
    }

    pub fn with_capacity(params: ModelParams, start: Vertex, seed: u64, steps: usize) -> Self {
        let mut t = Self::new(params, start, seed);
        t.packed.reserve(steps.div_ceil(4));
        t
    }

    pub fn from_moves(params: ModelParams, start: Vertex, seed: u64, moves: &[Move]) -> Self {
        let mut t = Self::with_capacity(params, start, seed, moves.len());
        moves.iter().for_each(|m| t.push(*m));
        t
    }

    #[inline]
    pub fn push(&mut self, mv: Move) {
        let slot = self.len & 3;
        if slot == 0 {
            self.packed.push(0);
        }
        *self.packed.last_mut().unwrap() |= mv.code() << (2 * slot);
        self.len += 1;
    }

    /// Number of steps `N`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn move_at(&self, i: usize) -> Move {
        Move::from_code(self.packed[i >> 2] >> (2 * (i & 3)))
    }

    pub fn moves(&self) -> impl Iterator<Item = Move> + '_ {
        (0..self.len).map(move |i| self.move_at(i))
    }

    pub fn packed_moves(&self) -> &[u8] {
        &self.packed
    }

    pub(crate) fn from_packed(params: ModelParams, start: Vertex, seed: u64, packed: Vec<u8>, len: usize) -> Self {
        Self { params, start, seed, exit: None, packed, len }
    }

    /// `Y_0, …, Y_N`.
    pub fn vertices(&self) -> impl Iterator<Item = Vertex> + '_ {
        let mut v = self.start;
        std::iter::once(self.start).chain(self.moves().map(move |m| {
            v = apply_move(v, m);
            v
        }))
    }

    /// `X_0, …, X_N`.
    pub fn x_path(&self) -> Vec<i64> {
        self.vertices().map(|v| v.x).collect()
    }

    pub fn final_vertex(&self) -> Vertex {
        self.vertex_at(self.len)
    }

    /// `Y_t` for `t ≤ N`, using per-byte displacement tables.
    pub fn vertex_at(&self, t: usize) -> Vertex {
        assert!(t <= self.len, "time {t} beyond trajectory length {}", self.len);
        let tables = byte_tables();
        let full = t / 4;
        let (mut dx, mut flips) = (0i64, 0u32);
        for b in &self.packed[..full] {
            dx += tables.0[*b as usize] as i64;
            flips += tables.1[*b as usize] as u32;
        }
        let mut v = Vertex { x: self.start.x + dx, y: self.start.y ^ (flips & 1) as u8 };
        for i in full * 4..t {
            v = apply_move(v, self.move_at(i));
        }
        v
    }

    /// Checks that every move follows an open edge of `cfg` (stays are
    /// always allowed when some incident edge is closed).
    pub fn follows(&self, cfg: &LadderConfig) -> bool {
        let mut v = self.start;
        for m in self.moves() {
            if !cfg.contains_column(v.x) {
                return false;
            }
            let w = apply_move(v, m);
            let ok = match m {
                Move::Stay => cfg.incident_pattern(v) != 7,
                _ => cfg.edge_open(v, w),
            };
            if !ok {
                return false;
            }
            v = w;
        }
        true
    }
}

fn byte_tables() -> &'static ([i8; 256], [u8; 256]) {
    static TABLES: std::sync::OnceLock<([i8; 256], [u8; 256])> = std::sync::OnceLock::new();
    TABLES.get_or_init(|| {
        let mut dx = [0i8; 256];
        let mut flips = [0u8; 256];
        for b in 0..256usize {
            for slot in 0..4 {
                match Move::from_code((b >> (2 * slot)) as u8) {
                    Move::Right => dx[b] += 1,
                    Move::Left => dx[b] -= 1,
                    Move::Vertical => flips[b] += 1,
                    Move::Stay => {}
                }
            }
        }
        (dx, flips)
    })
}

#[inline]
pub fn apply_move(v: Vertex, m: Move) -> Vertex {
    match m {
        Move::Right => Vertex { x: v.x + 1, y: v.y },
        Move::Left => Vertex { x: v.x - 1, y: v.y },
        Move::Vertical => Vertex { x: v.x, y: v.y ^ 1 },
        Move::Stay => v,
    }
}

/// The move taking `v` to `w`, if they are equal or adjacent.
pub fn move_between(v: Vertex, w: Vertex) -> Option<Move> {
    match (w.x - v.x, v.y == w.y) {
        (0, true) => Some(Move::Stay),
        (0, false) => Some(Move::Vertical),
        (1, true) => Some(Move::Right),
        (-1, true) => Some(Move::Left),
        _ => None,
    }
}
