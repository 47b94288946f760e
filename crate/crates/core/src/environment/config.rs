use serde::{Deserialize, Serialize};

use super::annotate::{compute_annotations, Annotations, TrapPiece};
use super::{slab_update, Slab, TState, Vertex};
use crate::error::{LadderError, Result};

/// A finite window `[x_min, x_max]` of the environment with its derived
/// annotations.
///
/// `slabs[k]` belongs to column `x_min + k`. The horizontals of the first
/// slab lead out of the window; they are kept so that the walk kernel at
/// `x_min` is the one of the surrounding environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderConfig {
    pub p: f64,
    pub seed: u64,
    x_min: i64,
    slabs: Vec<Slab>,
    t_states: Vec<TState>,
    ann: Annotations,
}

impl LadderConfig {
    /// Builds a window from its slabs and the backwards-communicating state
    /// of the leftmost column. Fails if the state ever becomes `00`.
    pub fn new(p: f64, seed: u64, x_min: i64, t_first: TState, slabs: Vec<Slab>) -> Result<Self> {
        let mut cfg = Self::unannotated(p, seed, x_min, t_first, slabs)?;
        cfg.ann = compute_annotations(&cfg);
        Ok(cfg)
    }

    pub(crate) fn unannotated(
        p: f64,
        seed: u64,
        x_min: i64,
        t_first: TState,
        slabs: Vec<Slab>,
    ) -> Result<Self> {
        if slabs.is_empty() {
            return Err(LadderError::Domain("a window needs at least one column".into()));
        }
        if t_first.is_dead() {
            return Err(LadderError::Domain("leftmost column has no backwards-communicating vertex".into()));
        }
        let mut t_states = Vec::with_capacity(slabs.len());
        t_states.push(t_first);
        for (k, s) in slabs.iter().enumerate().skip(1) {
            let next = slab_update(t_states[k - 1], *s);
            if next.is_dead() {
                return Err(LadderError::Domain(format!(
                    "no open path crosses column {}",
                    x_min + k as i64
                )));
            }
            t_states.push(next);
        }
        Ok(Self { p, seed, x_min, slabs, t_states, ann: Annotations::default() })
    }

    pub(crate) fn set_annotations(&mut self, ann: Annotations) {
        self.ann = ann;
    }

    pub fn x_min(&self) -> i64 {
        self.x_min
    }

    pub fn x_max(&self) -> i64 {
        self.x_min + self.slabs.len() as i64 - 1
    }

    pub fn n_columns(&self) -> usize {
        self.slabs.len()
    }

    pub fn contains_column(&self, x: i64) -> bool {
        x >= self.x_min && x <= self.x_max()
    }

    #[inline]
    pub(crate) fn idx(&self, x: i64) -> usize {
        (x - self.x_min) as usize
    }

    pub fn slabs(&self) -> &[Slab] {
        &self.slabs
    }

    pub fn t_states(&self) -> &[TState] {
        &self.t_states
    }

    pub fn slab(&self, x: i64) -> Slab {
        self.slabs[self.idx(x)]
    }

    pub fn t_state(&self, x: i64) -> TState {
        self.t_states[self.idx(x)]
    }

    /// Whether the edge between two vertices is present and open. Edges
    /// leaving the window count as closed.
    pub fn edge_open(&self, u: Vertex, w: Vertex) -> bool {
        if !self.contains_column(u.x) || !self.contains_column(w.x) {
            return false;
        }
        match (w.x - u.x, u.y == w.y) {
            (0, false) => self.slab(u.x).v(),
            (1, true) => self.slab(w.x).h(u.y),
            (-1, true) => self.slab(u.x).h(u.y),
            _ => false,
        }
    }

    /// Incident-edge pattern of `v`: bit 0 right, bit 1 left, bit 2 vertical.
    /// The right edge at `x_max` is unknown and reported closed.
    #[inline]
    pub fn incident_pattern(&self, v: Vertex) -> u8 {
        let k = self.idx(v.x);
        let here = self.slabs[k];
        let right = k + 1 < self.slabs.len() && self.slabs[k + 1].h(v.y);
        right as u8 | (here.h(v.y) as u8) << 1 | (here.v() as u8) << 2
    }

    /// Incident patterns of every vertex, indexed by `2·(x − x_min) + y`.
    pub fn pattern_table(&self) -> Vec<u8> {
        (self.x_min..=self.x_max())
            .flat_map(|x| [self.incident_pattern(Vertex::new(x, 0)), self.incident_pattern(Vertex::new(x, 1))])
            .collect()
    }

    /// Open neighbors of `v` inside the window.
    pub fn neighbors(&self, v: Vertex) -> Vec<Vertex> {
        [Vertex::new(v.x + 1, v.y), Vertex::new(v.x - 1, v.y), v.partner()]
            .into_iter()
            .filter(|w| self.edge_open(v, *w))
            .collect()
    }

    pub fn is_backwards(&self, v: Vertex) -> bool {
        self.t_state(v.x).level(v.y)
    }

    pub fn is_forwards(&self, v: Vertex) -> bool {
        self.ann.fc[self.idx(v.x)].level(v.y)
    }

    pub fn forwards_state(&self, x: i64) -> TState {
        self.ann.fc[self.idx(x)]
    }

    pub fn in_cluster(&self, v: Vertex) -> bool {
        self.ann.cluster[self.idx(v.x)] & (1 << v.y) != 0
    }

    /// Backbone membership: cluster vertices that communicate forwards.
    pub fn on_backbone(&self, v: Vertex) -> bool {
        self.in_cluster(v) && self.is_forwards(v)
    }

    /// Cluster vertices that do not communicate forwards.
    pub fn is_dead_end(&self, v: Vertex) -> bool {
        self.in_cluster(v) && !self.is_forwards(v)
    }

    pub fn is_pre_regeneration(&self, x: i64) -> bool {
        self.contains_column(x) && self.ann.pre_reg[self.idx(x)]
    }

    /// Columns of pre-regeneration points, increasing.
    pub fn pre_regeneration_points(&self) -> &[i64] {
        &self.ann.pre_reg_points
    }

    /// Trap pieces ordered by their left column.
    pub fn traps(&self) -> &[TrapPiece] {
        &self.ann.traps
    }

    /// The trap piece whose dead end contains column `x`, i.e. `a < x ≤ b`.
    pub fn trap_covering(&self, x: i64) -> Option<&TrapPiece> {
        let traps = &self.ann.traps;
        let k = traps.partition_point(|t| t.b < x);
        traps.get(k).filter(|t| t.a < x && x <= t.b)
    }

    /// Annotation byte of the on-disk format for column `x`.
    pub fn column_byte(&self, x: i64) -> u8 {
        let k = self.idx(x);
        let t = self.t_states[k].bits();
        let bb = (self.on_backbone(Vertex::new(x, 0)) as u8) | (self.on_backbone(Vertex::new(x, 1)) as u8) << 1;
        self.slabs[k].bits() | t << 3 | (self.ann.pre_reg[k] as u8) << 5 | bb << 6
    }

    /// Checks the structural invariants: compatibility closure, no `00`,
    /// pre-regeneration isolation and the trap conditions.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(LadderError::Internal(msg));
        for k in 0..self.slabs.len() {
            if self.t_states[k].is_dead() {
                return bad(format!("dead state at column {}", self.x_min + k as i64));
            }
            if k > 0 && slab_update(self.t_states[k - 1], self.slabs[k]) != self.t_states[k] {
                return bad(format!("incompatible slab at column {}", self.x_min + k as i64));
            }
        }
        for &x in self.pre_regeneration_points() {
            if self.slab(x).v() || self.slab(x).h1() || self.slab(x + 1).h1() {
                return bad(format!("pre-regeneration point {x} is not isolated"));
            }
        }
        for w in self.traps().windows(2) {
            if w[0].b + 1 > w[1].a {
                return bad(format!("overlapping traps at {} and {}", w[0].a, w[1].a));
            }
        }
        for t in self.traps() {
            if !t.check(self) {
                return bad(format!("trap at {} violates its definition", t.a));
            }
        }
        Ok(())
    }
}
