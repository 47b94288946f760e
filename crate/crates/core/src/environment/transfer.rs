//! Transfer matrix of the backwards-communicating chain and its Doob
//! transform conditioned on never reaching `00`.

use serde::{Deserialize, Serialize};

use super::{slab_update, Slab, TState};
use crate::error::{domain, LadderError, Result};

const POWER_TOL: f64 = 1e-14;
const POWER_MAX_ITER: usize = 1_000_000;

/// Unconditioned slab-weight matrix, its conditioned Doob transform, and
/// the per-transition slab laws.
///
/// 4×4 arrays are indexed by [`TState::bits`] (`00, 10, 01, 11` in bit
/// order); 3×3 arrays by [`TState::live_index`] (`01, 10, 11`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferMatrix {
    pub p: f64,
    pub q: [[f64; 4]; 4],
    pub p_cond: [[f64; 3]; 3],
    pub pi: [f64; 3],
    pub perron_value: f64,
    /// Right Perron vector, normalized to sum 1.
    pub h: [f64; 3],
    /// Left Perron vector, normalized to sum 1.
    pub left: [f64; 3],
    /// `slab_laws[ab][cd][η]`, zero for incompatible patterns and for
    /// impossible transitions.
    pub slab_laws: [[[f64; 8]; 3]; 3],
    /// Joint law of the next slab given the current state:
    /// `w(η) h(update(ab, η)) / (ρ h(ab))`.
    pub step_law: [[f64; 8]; 3],
    step_cdf: [[f64; 8]; 3],
}

fn power_iteration(m: &[[f64; 3]; 3], transpose: bool) -> Result<(f64, [f64; 3])> {
    let mut x = [1.0 / 3.0; 3];
    let mut rho = 0.0;
    for _ in 0..POWER_MAX_ITER {
        let mut y = [0.0; 3];
        for i in 0..3 {
            for j in 0..3 {
                y[i] += if transpose { m[j][i] } else { m[i][j] } * x[j];
            }
        }
        let s: f64 = y.iter().sum();
        if !(s > 0.0) || !s.is_finite() {
            return Err(LadderError::Internal("power iteration lost positivity".into()));
        }
        let next = [y[0] / s, y[1] / s, y[2] / s];
        let delta = (0..3).map(|i| (next[i] - x[i]).abs()).fold(0.0, f64::max);
        let new_rho = s;
        let settled = delta <= POWER_TOL && (new_rho - rho).abs() <= POWER_TOL * new_rho;
        x = next;
        rho = new_rho;
        if settled {
            return Ok((rho, x));
        }
    }
    Err(LadderError::Internal("power iteration did not converge".into()))
}

/// Builds the slab-weight matrix and its conditioned transform at density `p`.
pub fn build_transfer_matrix(p: f64) -> Result<TransferMatrix> {
    if !(p > 0.0 && p < 1.0) {
        return domain(format!("edge density must lie in (0,1), got {p}"));
    }
    let mut q = [[0.0; 4]; 4];
    for ab in 0..4u8 {
        for eta in Slab::all() {
            let cd = slab_update(TState::from_bits(ab), eta);
            q[ab as usize][cd.bits() as usize] += eta.weight(p);
        }
    }
    let mut restricted = [[0.0; 3]; 3];
    for (i, a) in TState::LIVE.iter().enumerate() {
        for (j, c) in TState::LIVE.iter().enumerate() {
            restricted[i][j] = q[a.bits() as usize][c.bits() as usize];
        }
    }
    let (rho, h) = power_iteration(&restricted, false)?;
    let (_, left) = power_iteration(&restricted, true)?;

    let mut p_cond = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            p_cond[i][j] = restricted[i][j] * h[j] / (rho * h[i]);
        }
    }
    let mut pi = [left[0] * h[0], left[1] * h[1], left[2] * h[2]];
    let z: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= z);

    let mut slab_laws = [[[0.0; 8]; 3]; 3];
    let mut step_law = [[0.0; 8]; 3];
    for (i, a) in TState::LIVE.iter().enumerate() {
        for eta in Slab::all() {
            let cd = slab_update(*a, eta);
            if let Some(j) = cd.live_index() {
                let w = eta.weight(p);
                slab_laws[i][j][eta.bits() as usize] = w;
                step_law[i][eta.bits() as usize] = w * h[j] / (rho * h[i]);
            }
        }
        for law in slab_laws[i].iter_mut() {
            let z: f64 = law.iter().sum();
            if z > 0.0 {
                law.iter_mut().for_each(|v| *v /= z);
            }
        }
    }
    let mut step_cdf = [[0.0; 8]; 3];
    for i in 0..3 {
        let total: f64 = step_law[i].iter().sum();
        let mut acc = 0.0;
        for k in 0..8 {
            acc += step_law[i][k] / total;
            step_cdf[i][k] = acc;
        }
        step_cdf[i][7] = f64::INFINITY;
    }

    Ok(TransferMatrix { p, q, p_cond, pi, perron_value: rho, h, left, slab_laws, step_law, step_cdf })
}

impl TransferMatrix {
    /// Conditioned transition probability between two live states.
    pub fn transition(&self, from: TState, to: TState) -> f64 {
        match (from.live_index(), to.live_index()) {
            (Some(i), Some(j)) => self.p_cond[i][j],
            _ => 0.0,
        }
    }

    /// Stationary probability of a live state.
    pub fn stationary(&self, s: TState) -> f64 {
        s.live_index().map_or(0.0, |i| self.pi[i])
    }

    /// Draws the next slab from state `ab` using a single uniform `u ∈ [0,1)`.
    #[inline]
    pub fn sample_slab(&self, ab: TState, u: f64) -> Slab {
        let row = &self.step_cdf[ab.live_index().expect("live state")];
        let mut k = 0;
        while u >= row[k] {
            k += 1;
        }
        Slab::from_bits(k as u8)
    }

    /// Draws the next slab from `ab`, restricted to slabs whose top
    /// horizontal is open (`top_open`) or closed.
    pub fn sample_slab_given_top(&self, ab: TState, top_open: bool, u: f64) -> Slab {
        let row = &self.step_law[ab.live_index().expect("live state")];
        let keep = |k: usize| Slab::from_bits(k as u8).h1() == top_open;
        let total: f64 = (0..8).filter(|&k| keep(k)).map(|k| row[k]).sum();
        let mut acc = 0.0;
        let mut last = 0;
        for k in (0..8).filter(|&k| keep(k)) {
            acc += row[k] / total;
            last = k;
            if u < acc {
                return Slab::from_bits(k as u8);
            }
        }
        Slab::from_bits(last as u8)
    }

    /// Probability that the trap-body pattern (both horizontals open,
    /// vertical closed) follows a column in state `11`.
    pub fn trap_persistence(&self) -> f64 {
        self.step_law[2][Slab::TRAP_BODY.bits() as usize]
    }

    /// Probability that, from state `11`, the next slab has exactly one
    /// horizontal open and its vertical closed.
    pub fn trap_exit_probability(&self) -> f64 {
        Slab::all()
            .filter(|s| !s.v() && s.h0() != s.h1())
            .map(|s| self.step_law[2][s.bits() as usize])
            .sum()
    }

    /// Probability that the top horizontal of the next slab is closed,
    /// given the current column is in state `10`.
    pub fn top_closed_after_bottom(&self) -> f64 {
        Slab::all().filter(|s| !s.h1()).map(|s| self.step_law[1][s.bits() as usize]).sum()
    }

    /// Largest deviation from the structural identities: row sums,
    /// stationarity, detailed balance and the `01 ↔ 10` symmetry.
    pub fn invariant_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..3 {
            worst = worst.max((self.p_cond[i].iter().sum::<f64>() - 1.0).abs());
            let moved: f64 = (0..3).map(|k| self.pi[k] * self.p_cond[k][i]).sum();
            worst = worst.max((moved - self.pi[i]).abs());
            for j in 0..3 {
                let flow = self.pi[i] * self.p_cond[i][j] - self.pi[j] * self.p_cond[j][i];
                worst = worst.max(flow.abs());
            }
        }
        let swap = [1usize, 0, 2];
        for i in 0..3 {
            for j in 0..3 {
                worst = worst.max((self.p_cond[i][j] - self.p_cond[swap[i]][swap[j]]).abs());
            }
        }
        worst
    }
}
