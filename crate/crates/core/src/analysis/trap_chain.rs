//! The reflected nearest-neighbour walk on `{0,…,m}` that models an
//! excursion of the agile walk into a trap of depth `m`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, LadderError, Result};
use crate::stats::RunningStats;

/// Segment `{0,…,m}` with up-probability `e^λ/(e^λ+e^{−λ})` inside and
/// reflection at both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapChainSpec {
    pub m: u32,
    pub lambda: f64,
}

impl TrapChainSpec {
    pub fn new(m: u32, lambda: f64) -> Result<Self> {
        if m < 1 {
            return domain("trap depth must be >= 1");
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return domain(format!("bias must be finite and >= 0, got {lambda}"));
        }
        Ok(Self { m, lambda })
    }

    /// Probability of stepping up from an interior site.
    pub fn up(&self) -> f64 {
        1.0 / (1.0 + (-2.0 * self.lambda).exp())
    }

    fn step<R: Rng + ?Sized>(&self, s: u32, rng: &mut R) -> u32 {
        if s == 0 {
            1
        } else if s == self.m {
            self.m - 1
        } else if rng.gen::<f64>() < self.up() {
            s + 1
        } else {
            s - 1
        }
    }
}

/// `E₀[τ_m]` by first-step analysis on `m+1` unknowns. With `h_j` the
/// expected time to reach 0 from `j`, the unknowns are the differences
/// `d_j = h_j − h_{j−1}` for `1 ≤ j ≤ m` and the return time `t = 1 + h_1`:
///
/// * `(1−a) d_j − a d_{j+1} = 1` inside the segment,
/// * `d_m = 1` at the reflecting end,
/// * `t − d_1 = 1`.
///
/// In these variables the system is bidiagonal with positive pivots, so a
/// dense solve keeps full precision even when `e^{2λm}` is large.
pub fn trap_return_time_exact(spec: TrapChainSpec) -> Result<f64> {
    let m = spec.m as usize;
    let a = spec.up();
    let mut mat = DMatrix::<f64>::zeros(m + 1, m + 1);
    let rhs = DVector::<f64>::from_element(m + 1, 1.0);
    // Unknown 0 is t, unknown j is d_j.
    mat[(0, 0)] = 1.0;
    mat[(0, 1)] = -1.0;
    for j in 1..m {
        mat[(j, j)] = 1.0 - a;
        mat[(j, j + 1)] = -a;
    }
    mat[(m, m)] = 1.0;
    let sol = mat
        .lu()
        .solve(&rhs)
        .ok_or_else(|| LadderError::Internal("singular first-step system".into()))?;
    Ok(sol[0])
}

/// Length of one excursion from 0 back to 0.
pub fn simulate_trap_return<R: Rng + ?Sized>(spec: TrapChainSpec, rng: &mut R) -> u64 {
    let mut s = spec.step(0, rng);
    let mut t = 1;
    while s != 0 {
        s = spec.step(s, rng);
        t += 1;
    }
    t
}

/// Whether the walk started at `i` returns to `i` before hitting 0.
pub fn simulate_ruin_event<R: Rng + ?Sized>(spec: TrapChainSpec, i: u32, rng: &mut R) -> bool {
    let mut s = spec.step(i, rng);
    while s != 0 && s != i {
        s = spec.step(s, rng);
    }
    s == i
}

/// Monte Carlo `(mean, se)` of `τ_m^κ` over `samples` excursions.
pub fn trap_return_moment_mc<R: Rng + ?Sized>(spec: TrapChainSpec, kappa: f64, samples: usize, rng: &mut R) -> (f64, f64) {
    let s: RunningStats = (0..samples).map(|_| (simulate_trap_return(spec, rng) as f64).powf(kappa)).collect();
    (s.mean(), s.se())
}
