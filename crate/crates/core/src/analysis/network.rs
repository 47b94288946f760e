//! The backbone as an electrical network with conductances
//! `C(u,w) = e^{λ(x(u)+x(w))}`, and exact harmonic solves on it.
//!
//! The agile backbone walk is the network walk, so hitting probabilities
//! and effective resistances follow from Kron reduction: free vertices are
//! eliminated one by one (star–mesh), in log-conductances, from the far
//! ends inward. Every quantity stays positive, so there is no cancellation
//! even when the walk has to climb back against a drift of `e^{200}`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::analysis::formulas::{backtrack_probability_bound, nash_williams_lower_bound};

use crate::environment::{LadderConfig, Vertex};
use crate::error::{domain, LadderError, Result};

/// Backbone vertices of a column range with their open backbone edges.
#[derive(Debug, Clone)]
pub struct BackboneNetwork {
    pub lambda: f64,
    pub vertices: Vec<Vertex>,
    index: HashMap<Vertex, usize>,
    /// `(neighbour, log-conductance)` lists. Logs keep far windows finite.
    adj: Vec<Vec<(usize, f64)>>,
}

impl BackboneNetwork {
    /// Backbone of `config` restricted to columns `lo..=hi`.
    pub fn new(config: &LadderConfig, lambda: f64, lo: i64, hi: i64) -> Result<Self> {
        if lo > hi || !config.contains_column(lo) || !config.contains_column(hi) {
            return domain(format!("column range [{lo}, {hi}] is not inside the window"));
        }
        let vertices: Vec<Vertex> = (lo..=hi)
            .flat_map(|x| [Vertex::new(x, 0), Vertex::new(x, 1)])
            .filter(|v| config.on_backbone(*v))
            .collect();
        let index: HashMap<Vertex, usize> = vertices.iter().enumerate().map(|(i, v)| (*v, i)).collect();
        let adj = vertices
            .iter()
            .map(|v| {
                config
                    .neighbors(*v)
                    .into_iter()
                    .filter_map(|w| index.get(&w).map(|&j| (j, lambda * (v.x + w.x) as f64)))
                    .collect()
            })
            .collect();
        Ok(Self { lambda, vertices, index, adj })
    }

    pub fn contains(&self, v: Vertex) -> bool {
        self.index.contains_key(&v)
    }

    fn idx(&self, v: Vertex) -> Result<usize> {
        self.index
            .get(&v)
            .copied()
            .ok_or_else(|| LadderError::Domain(format!("vertex ({}, {}) is not a backbone vertex of the network", v.x, v.y)))
    }

    /// Total conductance at `v`.
    pub fn weight(&self, v: Vertex) -> Result<f64> {
        Ok(self.log_weight(self.idx(v)?).exp())
    }

    fn log_weight(&self, i: usize) -> f64 {
        let top = self.adj[i].iter().map(|e| e.1).fold(f64::NEG_INFINITY, f64::max);
        top + self.adj[i].iter().map(|e| (e.1 - top).exp()).sum::<f64>().ln()
    }

    /// Transition probabilities of the network walk out of vertex `i`.
    fn steps(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lw = self.log_weight(i);
        self.adj[i].iter().map(move |&(w, lc)| (w, (lc - lw).exp()))
    }

    /// Vertices reachable from `start` without passing through `blocked`.
    fn reachable(&self, start: usize, blocked: &[bool]) -> Vec<bool> {
        let mut seen = vec![false; self.vertices.len()];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(u) = stack.pop() {
            if blocked[u] && u != start {
                continue;
            }
            for &(w, _) in &self.adj[u] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen
    }

    /// Harmonic function with value 1 on `ones`, 0 on `zeros`, solved on
    /// the free vertices reachable from `from`.
    fn harmonic(&self, from: usize, ones: &[usize], zeros: &[usize]) -> Result<Vec<f64>> {
        let n = self.vertices.len();
        let mut fixed = vec![None; n];
        for &i in zeros {
            fixed[i] = Some(0.0);
        }
        for &i in ones {
            fixed[i] = Some(1.0);
        }
        let blocked: Vec<bool> = fixed.iter().map(Option::is_some).collect();
        let reach = self.reachable(from, &blocked);
        if !ones.iter().any(|&i| reach[i]) {
            return Err(LadderError::Disconnected);
        }
        let free: Vec<usize> = (0..n).filter(|&i| reach[i] && fixed[i].is_none()).collect();
        let mut slot = vec![usize::MAX; n];
        for (k, &i) in free.iter().enumerate() {
            slot[i] = k;
        }
        let mut mat = DMatrix::<f64>::zeros(free.len(), free.len());
        let mut rhs = DVector::<f64>::zeros(free.len());
        for (k, &u) in free.iter().enumerate() {
            mat[(k, k)] = 1.0;
            for (w, p) in self.steps(u) {
                match fixed[w] {
                    Some(val) => rhs[k] += p * val,
                    None => mat[(k, slot[w])] -= p,
                }
            }
        }
        let sol = if free.is_empty() {
            DVector::zeros(0)
        } else {
            mat.lu().solve(&rhs).ok_or_else(|| LadderError::Internal("singular harmonic system".into()))?
        };
        let mut h = vec![0.0; n];
        for (i, v) in h.iter_mut().enumerate() {
            *v = match fixed[i] {
                Some(val) => val,
                None if reach[i] => sol[slot[i]],
                None => f64::NAN,
            };
        }
        Ok(h)
    }

    /// Log-conductances between `groups` after merging each group into one
    /// node and eliminating every other vertex. Vertices are eliminated in
    /// order of decreasing distance from the first vertex of `groups[0]`,
    /// which keeps fill-in bounded on a ladder.
    fn reduced(&self, groups: &[&[usize]]) -> Vec<Vec<f64>> {
        let n = self.vertices.len();
        let g = groups.len();
        // Node ids: groups first, then the remaining vertices.
        let mut node = vec![usize::MAX; n];
        for (k, grp) in groups.iter().enumerate() {
            for &i in grp.iter() {
                node[i] = k;
            }
        }
        let mut others: Vec<usize> = (0..n).filter(|&i| node[i] == usize::MAX).collect();
        let x0 = groups[0].first().map_or(0, |&i| self.vertices[i].x);
        others.sort_by_key(|&i| std::cmp::Reverse((self.vertices[i].x - x0).abs()));
        for (k, &i) in others.iter().enumerate() {
            node[i] = g + k;
        }
        let mut adj: Vec<HashMap<usize, f64>> = vec![HashMap::new(); g + others.len()];
        for (i, edges) in self.adj.iter().enumerate() {
            for &(w, lc) in edges {
                let (a, b) = (node[i], node[w]);
                if a != b {
                    let e = adj[a].entry(b).or_insert(f64::NEG_INFINITY);
                    *e = log_add(*e, lc);
                }
            }
        }
        // Edges were inserted from both ends, so each map already holds the
        // symmetric conductance.
        for u in g..adj.len() {
            let star: Vec<(usize, f64)> = std::mem::take(&mut adj[u]).into_iter().collect();
            let total = star.iter().fold(f64::NEG_INFINITY, |acc, e| log_add(acc, e.1));
            for &(w, _) in &star {
                adj[w].remove(&u);
            }
            for (a, &(wa, la)) in star.iter().enumerate() {
                for &(wb, lb) in &star[a + 1..] {
                    let lc = la + lb - total;
                    for (p, q) in [(wa, wb), (wb, wa)] {
                        let e = adj[p].entry(q).or_insert(f64::NEG_INFINITY);
                        *e = log_add(*e, lc);
                    }
                }
            }
        }
        (0..g).map(|a| (0..g).map(|b| adj[a].get(&b).copied().unwrap_or(f64::NEG_INFINITY)).collect()).collect()
    }

    /// `P^v(σ_A < σ_B)` for the agile walk on the network, where `σ` are
    /// hitting times at times `≥ 1`.
    pub fn hitting_probability(&self, v: Vertex, a: &[Vertex], b: &[Vertex]) -> Result<f64> {
        let vi = self.idx(v)?;
        let ai: Vec<usize> = a.iter().map(|u| self.idx(*u)).collect::<Result<_>>()?;
        let bi: Vec<usize> = b.iter().map(|u| self.idx(*u)).collect::<Result<_>>()?;
        let mut all: Vec<usize> = ai.iter().chain(&bi).copied().collect();
        all.sort_unstable();
        all.dedup();
        if all.len() != ai.len() + bi.len() {
            return domain("target sets must be disjoint");
        }
        if all.contains(&vi) {
            return self.harmonic_from_neighbors(vi, &ai, &bi);
        }
        // The walk traced on {v, A, B} is the walk on the reduced network.
        let g = self.reduced(&[&[vi], &ai, &bi]);
        let (ca, cb) = (g[0][1], g[0][2]);
        if ca == f64::NEG_INFINITY && cb == f64::NEG_INFINITY {
            return Err(LadderError::Disconnected);
        }
        Ok(1.0 / (1.0 + (cb - ca).exp()))
    }

    fn harmonic_from_neighbors(&self, vi: usize, ones: &[usize], zeros: &[usize]) -> Result<f64> {
        if self.adj[vi].is_empty() {
            return Err(LadderError::Disconnected);
        }
        let h = self.harmonic(vi, ones, zeros)?;
        // If v is itself free, its value is already the one-step average.
        if !ones.contains(&vi) && !zeros.contains(&vi) {
            return Ok(h[vi]);
        }
        Ok(self.steps(vi).map(|(w, p)| p * h[w]).sum())
    }

    /// Effective resistance between `v` and the set `targets`.
    pub fn effective_resistance(&self, v: Vertex, targets: &[Vertex]) -> Result<f64> {
        let vi = self.idx(v)?;
        let ti: Vec<usize> = targets.iter().map(|u| self.idx(*u)).collect::<Result<_>>()?;
        if ti.is_empty() {
            return domain("target set is empty");
        }
        if ti.contains(&vi) {
            return Ok(0.0);
        }
        let g = self.reduced(&[&[vi], &ti]);
        if g[0][1] == f64::NEG_INFINITY {
            return Err(LadderError::Disconnected);
        }
        Ok((-g[0][1]).exp())
    }
}

/// `ln(e^a + e^b)`.
fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        hi
    } else {
        hi + (lo - hi).exp().ln_1p()
    }
}

/// Effective resistance between `v` and `targets` on the backbone of the
/// whole window.
pub fn effective_resistance(config: &LadderConfig, lambda: f64, v: Vertex, targets: &[Vertex]) -> Result<f64> {
    BackboneNetwork::new(config, lambda, config.x_min(), config.x_max())?.effective_resistance(v, targets)
}

/// Exact return probability and resistance at one backbone vertex, next to
/// the bounds they must satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReturnCheck {
    pub vertex: Vertex,
    /// `P^v(σ_0 < σ_k)` for the agile backbone walk.
    pub hitting: f64,
    pub hitting_bound: f64,
    /// `R(v ↔ 0)` on the whole window.
    pub resistance: f64,
    pub resistance_bound: f64,
}

impl ReturnCheck {
    pub fn holds(&self) -> bool {
        self.hitting <= self.hitting_bound * (1.0 + 1e-10) && self.resistance >= self.resistance_bound * (1.0 - 1e-10)
    }
}

/// Checks every backbone vertex strictly between columns 0 and `k` of a
/// window whose origin is a pre-regeneration point. The walk started at
/// such a vertex cannot leave `[0, k]` without hitting column 0 or `k`, so
/// the solve on that range is exact.
pub fn return_probability_checks(config: &LadderConfig, lambda: f64, k: i64) -> Result<Vec<ReturnCheck>> {
    if !(lambda > 0.0) {
        return domain(format!("bias must be positive, got {lambda}"));
    }
    if !config.is_pre_regeneration(0) || k < 2 || !config.contains_column(k) {
        return domain("need a pre-regeneration point at 0 and column k >= 2 inside the window");
    }
    let local = BackboneNetwork::new(config, lambda, 0, k)?;
    let whole = BackboneNetwork::new(config, lambda, config.x_min(), config.x_max())?;
    let far: Vec<Vertex> = [Vertex::new(k, 0), Vertex::new(k, 1)].into_iter().filter(|v| local.contains(*v)).collect();
    let mut out = Vec::new();
    for m in 1..k {
        for y in 0..2 {
            let v = Vertex::new(m, y);
            if !local.contains(v) {
                continue;
            }
            out.push(ReturnCheck {
                vertex: v,
                hitting: match local.hitting_probability(v, &[Vertex::ORIGIN], &far) {
                    // Every path back to 0 passes column k first.
                    Err(LadderError::Disconnected) => 0.0,
                    other => other?,
                },
                hitting_bound: backtrack_probability_bound(lambda, m, k),
                resistance: whole.effective_resistance(v, &[Vertex::ORIGIN])?,
                resistance_bound: nash_williams_lower_bound(lambda, m),
            });
        }
    }
    Ok(out)
}
