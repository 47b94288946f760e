//! Three samplers of the environment: the stationary conditioned chain,
//! exact rejection from i.i.d. percolation on a finite window, and i.i.d.
//! cycles between pre-regeneration points.

use rand::Rng;

use super::{slab_update, LadderConfig, Slab, TState, TransferMatrix};
use crate::error::{domain, LadderError, Result};

pub const DEFAULT_REJECTION_BUDGET: u64 = 1_000_000;

/// Budget for [`sample_environment_rejection`].
#[derive(Debug, Clone, Copy)]
pub struct RejectionOptions {
    pub max_attempts: u64,
}

impl Default for RejectionOptions {
    fn default() -> Self {
        Self { max_attempts: DEFAULT_REJECTION_BUDGET }
    }
}

fn draw_stationary<R: Rng + ?Sized>(tm: &TransferMatrix, rng: &mut R) -> TState {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, s) in TState::LIVE.iter().enumerate() {
        acc += tm.pi[i];
        if u < acc {
            return *s;
        }
    }
    TState::BOTH
}

/// Samples `n_columns` consecutive columns `0..n_columns` of the
/// stationary conditioned environment.
pub fn sample_environment_chain<R: Rng + ?Sized>(
    tm: &TransferMatrix,
    n_columns: usize,
    rng: &mut R,
) -> Result<LadderConfig> {
    if n_columns == 0 {
        return domain("n_columns must be >= 1");
    }
    let mut t = draw_stationary(tm, rng);
    let mut slabs = Vec::with_capacity(n_columns);
    let mut first = TState::NONE;
    for k in 0..n_columns {
        let s = tm.sample_slab(t, rng.gen());
        t = slab_update(t, s);
        if k == 0 {
            first = t;
        }
        slabs.push(s);
    }
    LadderConfig::new(tm.p, 0, 0, first, slabs)
}

/// Exact sample of i.i.d. percolation on columns `−n1..=n2` conditioned on
/// an open left–right crossing. Edges leaving the window are closed.
pub fn sample_environment_rejection<R: Rng + ?Sized>(
    p: f64,
    n1: usize,
    n2: usize,
    rng: &mut R,
    options: RejectionOptions,
) -> Result<LadderConfig> {
    if !(p > 0.0 && p < 1.0) {
        return domain(format!("edge density must lie in (0,1), got {p}"));
    }
    if n1 == 0 || n2 == 0 {
        return domain("window half-widths must be >= 1");
    }
    let mut cdf = [0.0; 8];
    let mut acc = 0.0;
    for s in Slab::all() {
        acc += s.weight(p);
        cdf[s.bits() as usize] = acc;
    }
    cdf[7] = f64::INFINITY;
    let width = n1 + n2 + 1;
    let mut slabs = Vec::with_capacity(width);
    for _ in 0..options.max_attempts {
        slabs.clear();
        slabs.push(Slab::new(false, false, rng.gen::<f64>() < p));
        let mut t = TState::BOTH;
        let mut alive = true;
        for _ in 1..width {
            let u: f64 = rng.gen();
            let mut k = 0;
            while u >= cdf[k] {
                k += 1;
            }
            let s = Slab::from_bits(k as u8);
            t = slab_update(t, s);
            if t.is_dead() {
                alive = false;
                break;
            }
            slabs.push(s);
        }
        if alive {
            return LadderConfig::new(p, 0, -(n1 as i64), TState::BOTH, std::mem::take(&mut slabs));
        }
    }
    Err(LadderError::IterationLimit { attempts: options.max_attempts, acceptance_rate: 0.0 })
}

/// Appends the slabs of one cycle, starting right after a pre-regeneration
/// column and ending at the next one. Returns the cycle length.
fn extend_cycle<R: Rng + ?Sized>(tm: &TransferMatrix, rng: &mut R, out: &mut Vec<Slab>) -> usize {
    let stop = tm.top_closed_after_bottom();
    let mut t = TState::BOTTOM;
    let mut s = tm.sample_slab_given_top(t, false, rng.gen());
    let mut len = 1;
    loop {
        t = slab_update(t, s);
        out.push(s);
        let candidate = t == TState::BOTTOM && !s.v() && !s.h1();
        s = if candidate {
            if rng.gen::<f64>() < stop {
                return len;
            }
            tm.sample_slab_given_top(t, true, rng.gen())
        } else {
            tm.sample_slab(t, rng.gen())
        };
        len += 1;
    }
}

/// `n_cycles` i.i.d. cycles starting from a pre-regeneration point at
/// `x = 0`. One extra column is appended so that the final cycle boundary
/// is itself recognizable as a pre-regeneration point.
pub fn sample_cycle_stationary<R: Rng + ?Sized>(
    tm: &TransferMatrix,
    n_cycles: usize,
    rng: &mut R,
) -> Result<LadderConfig> {
    if n_cycles == 0 {
        return domain("n_cycles must be >= 1");
    }
    let mut slabs = vec![Slab::PRE_REGENERATION];
    for _ in 0..n_cycles {
        extend_cycle(tm, rng, &mut slabs);
    }
    slabs.push(tm.sample_slab_given_top(TState::BOTTOM, false, rng.gen()));
    LadderConfig::new(tm.p, 0, 0, TState::BOTTOM, slabs)
}

/// Two-sided cycle-stationary window with a pre-regeneration point at the
/// origin. Cycles to the right are drawn from `right`, cycles to the left
/// from `left` and placed outward, so enlarging either extent keeps every
/// previously generated column unchanged.
pub fn sample_cycle_stationary_two_sided<R: Rng + ?Sized>(
    tm: &TransferMatrix,
    left_columns: usize,
    right_columns: usize,
    left: &mut R,
    right: &mut R,
) -> Result<LadderConfig> {
    let mut right_slabs = vec![Slab::PRE_REGENERATION];
    while right_slabs.len() <= right_columns.max(1) {
        extend_cycle(tm, right, &mut right_slabs);
    }
    right_slabs.push(tm.sample_slab_given_top(TState::BOTTOM, false, right.gen()));

    let mut left_cycles: Vec<Vec<Slab>> = Vec::new();
    let mut span = 0;
    let mut buf = Vec::new();
    while span < left_columns {
        buf.clear();
        span += extend_cycle(tm, left, &mut buf);
        left_cycles.push(buf.clone());
    }
    let mut slabs = Vec::with_capacity(span + right_slabs.len());
    slabs.push(Slab::PRE_REGENERATION);
    for cycle in left_cycles.iter().rev() {
        slabs.extend_from_slice(cycle);
    }
    slabs.extend_from_slice(&right_slabs[1..]);
    LadderConfig::new(tm.p, 0, -(span as i64), TState::BOTTOM, slabs)
}
