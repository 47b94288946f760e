//! Forwards communication, cluster membership, pre-regeneration points and
//! trap pieces of a window.

use serde::{Deserialize, Serialize};

use super::{LadderConfig, Slab, TState, Vertex};

/// A trap piece `[a, b)`: open vertical at `a`, both horizontals open and
/// verticals closed through `b`, and exactly one open horizontal into `b + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrapPiece {
    pub a: i64,
    pub b: i64,
    pub length: i64,
    /// Level of the single open exit horizontal.
    pub exit_level: u8,
    pub entrance: Vertex,
    pub end: Vertex,
}

impl TrapPiece {
    fn new(a: i64, b: i64, exit_level: u8) -> Self {
        Self {
            a,
            b,
            length: b - a,
            exit_level,
            entrance: Vertex::new(a, 1 - exit_level),
            end: Vertex::new(b + 1, exit_level),
        }
    }

    /// Dead-end vertices `(a+1..=b, 1 − i)`.
    pub fn dead_end(&self) -> impl Iterator<Item = Vertex> + '_ {
        (self.a + 1..=self.b).map(move |x| Vertex::new(x, 1 - self.exit_level))
    }

    /// Re-checks the three defining conditions literally on `cfg`.
    pub fn check(&self, cfg: &LadderConfig) -> bool {
        if self.b <= self.a || self.b + 1 > cfg.x_max() || self.a < cfg.x_min() {
            return false;
        }
        let verticals = cfg.slab(self.a).v() && (self.a + 1..=self.b).all(|x| !cfg.slab(x).v());
        let horizontals = (self.a + 1..=self.b).all(|x| cfg.slab(x).h0() && cfg.slab(x).h1());
        let exit = cfg.slab(self.b + 1);
        verticals && horizontals && exit.h0() != exit.h1() && exit.h(self.exit_level)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub(crate) struct Annotations {
    pub fc: Vec<TState>,
    pub cluster: Vec<u8>,
    pub pre_reg: Vec<bool>,
    pub pre_reg_points: Vec<i64>,
    pub traps: Vec<TrapPiece>,
}

fn forwards_states(slabs: &[Slab], last: TState) -> Vec<TState> {
    let n = slabs.len();
    let mut fc = vec![TState::NONE; n];
    fc[n - 1] = last;
    for k in (0..n - 1).rev() {
        let s = slabs[k + 1];
        let f = fc[k + 1];
        let v = slabs[k].v();
        let bottom = (s.h0() && f.bottom()) || (v && s.h1() && f.top());
        let top = (s.h1() && f.top()) || (v && s.h0() && f.bottom());
        fc[k] = TState::from_levels(bottom, top);
    }
    fc
}

fn cluster_mask(cfg: &LadderConfig, fc: &[TState]) -> Vec<u8> {
    let slabs = cfg.slabs();
    let t = cfg.t_states();
    let n = slabs.len();
    let mut mask: Vec<u8> = (0..n).map(|k| t[k].bits() | fc[k].bits()).collect();
    let mut stack: Vec<(usize, u8)> = Vec::new();
    for k in 0..n {
        for y in 0..2u8 {
            if mask[k] & (1 << y) != 0 {
                stack.push((k, y));
            }
        }
        while let Some((k, y)) = stack.pop() {
            let mut reach = |j: usize, z: u8, stack: &mut Vec<(usize, u8)>| {
                if mask[j] & (1 << z) == 0 {
                    mask[j] |= 1 << z;
                    stack.push((j, z));
                }
            };
            if slabs[k].v() {
                reach(k, y ^ 1, &mut stack);
            }
            if k + 1 < n && slabs[k + 1].h(y) {
                reach(k + 1, y, &mut stack);
            }
            if k > 0 && slabs[k].h(y) {
                reach(k - 1, y, &mut stack);
            }
        }
    }
    mask
}

fn find_traps(cfg: &LadderConfig, cluster: &[u8]) -> Vec<TrapPiece> {
    let slabs = cfg.slabs();
    let n = slabs.len();
    let mut traps = Vec::new();
    let mut k = 0;
    while k < n {
        if !slabs[k].v() || cluster[k] == 0 {
            k += 1;
            continue;
        }
        let mut j = k;
        while j + 1 < n && slabs[j + 1] == Slab::TRAP_BODY {
            j += 1;
        }
        if j > k && j + 1 < n {
            let exit = slabs[j + 1];
            if exit.h0() != exit.h1() {
                let a = cfg.x_min() + k as i64;
                traps.push(TrapPiece::new(a, a + (j - k) as i64, if exit.h0() { 0 } else { 1 }));
            }
        }
        k = j.max(k + 1);
    }
    traps
}

pub(crate) fn compute_annotations(cfg: &LadderConfig) -> Annotations {
    let slabs = cfg.slabs();
    let n = slabs.len();
    let fc = forwards_states(slabs, cfg.t_states()[n - 1]);
    let cluster = cluster_mask(cfg, &fc);
    let mut pre_reg = vec![false; n];
    let mut pre_reg_points = Vec::new();
    for k in 0..n.saturating_sub(1) {
        let s = slabs[k];
        if !s.v() && !s.h1() && !slabs[k + 1].h1() && cluster[k] & 1 != 0 {
            pre_reg[k] = true;
            pre_reg_points.push(cfg.x_min() + k as i64);
        }
    }
    let traps = find_traps(cfg, &cluster);
    Annotations { fc, cluster, pre_reg, pre_reg_points, traps }
}

/// Recomputes every annotation of `config` from its raw slabs.
pub fn annotate(config: &LadderConfig) -> LadderConfig {
    let mut out = config.clone();
    let ann = compute_annotations(&out);
    out.set_annotations(ann);
    out
}
