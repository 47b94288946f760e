//! Regeneration times of a trajectory and the statistics built on their
//! i.i.d. increments.
//!
//! A regeneration point is a pre-regeneration point `(i,0)` strictly to the
//! right of the start that the walk visits exactly once. Whether a visit is
//! the only one depends on the whole future, so a candidate is finalized
//! only when the trajectory ends more than `cutoff` columns to its right;
//! closer candidates are censored.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::environment::LadderConfig;
use crate::error::{domain, LadderError, Result};
use crate::stats::{linear_fit, median, RunningStats};
use crate::walker::{KernelTable, Move, Trajectory};

/// Default finalization distance.
pub const DEFAULT_CUTOFF: i64 = 30;

/// Regeneration times `τ_0 = 0 < τ_1 < …`, positions `ρ_k` and the
/// martingale `M_{τ_k}` of one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegenerationRecord {
    pub taus: Vec<u64>,
    pub rhos: Vec<i64>,
    pub martingale: Vec<f64>,
    pub cutoff: i64,
    /// Candidates visited once so far but too close to the final position.
    pub censored_tail: usize,
    pub seed: u64,
}

impl RegenerationRecord {
    /// Number of regenerations after `τ_0`.
    pub fn count(&self) -> usize {
        self.taus.len() - 1
    }

    /// Index of the first regeneration strictly after time `n`.
    pub fn first_after(&self, n: u64) -> Option<usize> {
        self.taus.iter().position(|&t| t > n)
    }
}

/// Detects regenerations of `traj` in `config` with finalization distance `cutoff`.
pub fn detect_regenerations(traj: &Trajectory, config: &LadderConfig, cutoff: i64) -> Result<RegenerationRecord> {
    if cutoff < 1 {
        return domain(format!("cutoff must be >= 1, got {cutoff}"));
    }
    let x0 = config.x_min();
    let n_cols = config.n_columns();
    let mut pre = vec![false; n_cols];
    for &x in config.pre_regeneration_points() {
        pre[(x - x0) as usize] = true;
    }
    let patterns = config.pattern_table();
    let table = KernelTable::<f64>::new(traj.params.lambda);
    let mut nu = [[0.0f64; 4]; 8];
    for (pattern, row) in nu.iter_mut().enumerate() {
        for mv in Move::ALL {
            row[mv as usize] = table.get(pattern as u8, mv).map_or(f64::NAN, |t| t.nu);
        }
    }

    // Visit counts, first-visit time and martingale value per pre-regeneration column.
    let mut visits = vec![0u32; n_cols];
    let mut first: Vec<(u64, f64)> = vec![(0, 0.0); n_cols];
    let out_of_window = |k: isize, y: usize| LadderError::OutOfWindow {
        x: x0 + k as i64,
        y: y as u8,
        x_min: x0,
        x_max: config.x_max(),
    };
    if !config.contains_column(traj.start.x) {
        return Err(out_of_window(traj.start.x as isize - x0 as isize, traj.start.y as usize));
    }
    let mut k = (traj.start.x - x0) as isize;
    let mut y = traj.start.y as usize;
    let mut m = 0.0;
    if y == 0 && pre[k as usize] {
        visits[k as usize] = 1;
    }
    const DX: [isize; 4] = [1, -1, 0, 0];
    let packed = traj.packed_moves();
    for t in 0..traj.len() {
        let code = (packed[t >> 2] >> (2 * (t & 3))) & 3;
        m += nu[patterns[2 * k as usize + y] as usize][code as usize];
        k += DX[code as usize];
        y ^= (code == 2) as usize;
        if k < 0 || k as usize >= n_cols {
            return Err(out_of_window(k, y));
        }
        let ku = k as usize;
        if y == 0 && pre[ku] {
            visits[ku] += 1;
            if visits[ku] == 1 {
                first[ku] = (t as u64 + 1, m);
            }
        }
    }

    let final_x = x0 + k as i64;
    let mut rec = RegenerationRecord {
        taus: vec![0],
        rhos: vec![traj.start.x],
        martingale: vec![0.0],
        cutoff,
        censored_tail: 0,
        seed: traj.seed,
    };
    for &x in config.pre_regeneration_points() {
        let ku = (x - x0) as usize;
        if x <= traj.start.x || visits[ku] != 1 {
            continue;
        }
        if final_x > x + cutoff {
            rec.taus.push(first[ku].0);
            rec.rhos.push(x);
            rec.martingale.push(first[ku].1);
        } else {
            rec.censored_tail += 1;
        }
    }
    Ok(rec)
}

/// Increments `(τ_{k+1}−τ_k, ρ_{k+1}−ρ_k, M_{τ_{k+1}}−M_{τ_k})` for `k ≥ 1`,
/// with the seed of the trajectory each came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IncrementSample {
    pub tau: Vec<u64>,
    pub rho: Vec<i64>,
    pub eta: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl IncrementSample {
    pub fn from_record(rec: &RegenerationRecord) -> Self {
        let mut s = Self::default();
        s.push_record(rec);
        s
    }

    /// Appends the increments of one record. Concatenating in replica order
    /// keeps merged samples independent of completion order.
    pub fn push_record(&mut self, rec: &RegenerationRecord) {
        for k in 1..rec.taus.len().saturating_sub(1) {
            self.tau.push(rec.taus[k + 1] - rec.taus[k]);
            self.rho.push(rec.rhos[k + 1] - rec.rhos[k]);
            self.eta.push(rec.martingale[k + 1] - rec.martingale[k]);
            self.seeds.push(rec.seed);
        }
    }

    pub fn extend(&mut self, other: &IncrementSample) {
        self.tau.extend_from_slice(&other.tau);
        self.rho.extend_from_slice(&other.rho);
        self.eta.extend_from_slice(&other.eta);
        self.seeds.extend_from_slice(&other.seeds);
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    pub fn tau_f64(&self) -> Vec<f64> {
        self.tau.iter().map(|&t| t as f64).collect()
    }

    /// CSV with header `tau_inc,rho_inc,seed`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "tau_inc,rho_inc,seed")?;
        for i in 0..self.len() {
            writeln!(w, "{},{},{}", self.tau[i], self.rho[i], self.seeds[i])?;
        }
        Ok(())
    }
}

/// A point estimate with its standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimate: f64,
    pub se: f64,
    pub n: usize,
    pub method: String,
    pub params: BTreeMap<String, f64>,
}

impl EstimateReport {
    pub fn new(estimate: f64, se: f64, n: usize, method: &str) -> Self {
        Self { estimate, se, n, method: method.to_string(), params: BTreeMap::new() }
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    /// `|a − b| / sqrt(se_a² + se_b²)`.
    pub fn z_score_against(&self, other: &EstimateReport) -> f64 {
        let s = self.se.hypot(other.se);
        if s == 0.0 {
            if self.estimate == other.estimate { 0.0 } else { f64::INFINITY }
        } else {
            (self.estimate - other.estimate).abs() / s
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Ratio estimator `mean(Δρ)/mean(Δτ)` with a delta-method standard error.
pub fn speed_estimate(sample: &IncrementSample) -> Result<EstimateReport> {
    let n = sample.len();
    if n < 2 {
        return Err(LadderError::InsufficientSample { needed: 2, got: n });
    }
    let nf = n as f64;
    let mt = sample.tau.iter().map(|&t| t as f64).sum::<f64>() / nf;
    let mr = sample.rho.iter().map(|&r| r as f64).sum::<f64>() / nf;
    let v = mr / mt;
    let resid: RunningStats = sample.tau.iter().zip(&sample.rho).map(|(&t, &r)| r as f64 - v * t as f64).collect();
    let se = (resid.variance() / nf).sqrt() / mt;
    Ok(EstimateReport::new(v, se, n, "regeneration-ratio"))
}

/// Direct estimator: mean of `X_N / N` over independent replicas.
pub fn direct_speed(final_x: &[i64], n_steps: u64) -> Result<EstimateReport> {
    if final_x.len() < 2 {
        return Err(LadderError::InsufficientSample { needed: 2, got: final_x.len() });
    }
    let s: RunningStats = final_x.iter().map(|&x| x as f64 / n_steps as f64).collect();
    Ok(EstimateReport::new(s.mean(), s.se(), final_x.len(), "direct-displacement").with_param("n", n_steps as f64))
}

/// Hill estimator of the tail index from the `k` largest observations.
pub fn tail_index_hill(sample: &[f64], k: usize) -> Result<EstimateReport> {
    if k == 0 || sample.len() < 10 * k {
        return Err(LadderError::InsufficientSample { needed: 10 * k.max(1), got: sample.len() });
    }
    if sample.iter().any(|&x| !(x > 0.0)) {
        return domain("Hill estimator needs strictly positive observations");
    }
    let mut v = sample.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    let threshold = v[k];
    let mean_log = v[..k].iter().map(|&x| (x / threshold).ln()).sum::<f64>() / k as f64;
    if mean_log <= 0.0 {
        return domain("top order statistics are tied; tail index undefined");
    }
    let alpha = 1.0 / mean_log;
    Ok(EstimateReport::new(alpha, alpha / (k as f64).sqrt(), sample.len(), "hill").with_param("k", k as f64))
}

/// Default Hill order-statistic count `⌊√n⌋`.
pub fn default_hill_k(n: usize) -> usize {
    (n as f64).sqrt().floor() as usize
}

/// Partial κ-th sample moments at geometrically spaced sample sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentCurve {
    pub kappa: f64,
    pub sizes: Vec<usize>,
    pub moments: Vec<f64>,
}

impl MomentCurve {
    /// Relative change between the last two levels.
    pub fn last_relative_change(&self) -> f64 {
        let k = self.moments.len();
        if k < 2 {
            return 0.0;
        }
        (self.moments[k - 1] / self.moments[k - 2] - 1.0).abs()
    }

    /// Ratio of the final moment to the one at the largest size not
    /// exceeding `final size / factor`.
    pub fn growth_over(&self, factor: f64) -> f64 {
        let Some(&n) = self.sizes.last() else { return f64::NAN };
        let target = n as f64 / factor;
        match self.sizes.iter().rposition(|&s| s as f64 <= target) {
            Some(i) => self.moments[self.moments.len() - 1] / self.moments[i],
            None => f64::NAN,
        }
    }
}

/// Running mean of `x^κ` at sizes 16, 32, 64, … and the full sample size.
pub fn moment_diagnostic(sample: &[f64], kappa: f64) -> Result<MomentCurve> {
    if !(kappa > 0.0) {
        return domain(format!("moment exponent must be positive, got {kappa}"));
    }
    let mut sizes = Vec::new();
    let mut s = 16usize;
    while s < sample.len() {
        sizes.push(s);
        s *= 2;
    }
    if !sample.is_empty() {
        sizes.push(sample.len());
    }
    let mut moments = Vec::with_capacity(sizes.len());
    let mut acc = 0.0;
    let mut next = 0;
    for (i, &x) in sample.iter().enumerate() {
        acc += x.abs().powf(kappa);
        if next < sizes.len() && i + 1 == sizes[next] {
            moments.push(acc / sizes[next] as f64);
            next += 1;
        }
    }
    Ok(MomentCurve { kappa, sizes, moments })
}

/// Values of `(X_n, M_n)` over a batch at one time `n`, and the centering
/// used for `X_n` (by default `n·v̄`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluctuationLevel {
    pub n: u64,
    pub x: Vec<f64>,
    pub m: Vec<f64>,
    pub center: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledFluctuation {
    pub n: u64,
    pub center: f64,
    pub median_x: f64,
    pub max_x: f64,
    pub median_m: f64,
    pub max_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluctuationReport {
    pub r: f64,
    pub speed: f64,
    pub levels: Vec<ScaledFluctuation>,
    /// Median of `|X_n − center|/n^{1/r}` strictly decreases across levels.
    pub decays: bool,
    /// Same for `|M_n|/n^{1/r}`.
    pub martingale_decays: bool,
}

/// Scaled fluctuations `|X_n − n v̄| / n^{1/r}` and `|M_n| / n^{1/r}` at each level.
pub fn mz_fluctuation_check(levels: &[FluctuationLevel], r: f64, speed: f64) -> Result<FluctuationReport> {
    if !(r > 1.0 && r < 2.0) {
        return domain(format!("exponent r must lie in (1,2), got {r}"));
    }
    let mut out = Vec::with_capacity(levels.len());
    for lv in levels {
        let scale = (lv.n as f64).powf(1.0 / r);
        let center = lv.center.unwrap_or(lv.n as f64 * speed);
        let fx: Vec<f64> = lv.x.iter().map(|x| (x - center).abs() / scale).collect();
        let fm: Vec<f64> = lv.m.iter().map(|m| m.abs() / scale).collect();
        let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
        out.push(ScaledFluctuation {
            n: lv.n,
            center,
            median_x: median(&fx),
            max_x: max(&fx),
            median_m: median(&fm),
            max_m: max(&fm),
        });
    }
    let decays = out.len() >= 2 && out.windows(2).all(|w| w[1].median_x < w[0].median_x);
    let martingale_decays = out.len() >= 2 && out.windows(2).all(|w| w[1].median_m < w[0].median_m);
    Ok(FluctuationReport { r, speed, levels: out, decays, martingale_decays })
}

/// Empirical tail of the overshoot `ρ_{ν(n)} − X_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvershootReport {
    pub n: u64,
    pub overshoots: Vec<i64>,
    /// Trajectories with no finalized regeneration after `n`.
    pub unresolved: usize,
    /// `(k, P(O ≥ k))` for `k = 1..=20`.
    pub tail: Vec<(i64, f64)>,
    pub log_slope: f64,
    pub log_slope_se: f64,
    pub mass_beyond_50: f64,
    /// Log-tail slope is negative with a three standard error margin.
    pub passes: bool,
}

/// Overshoot of the first regeneration after time `n` past `X_n`, for each
/// record with `x_at_n[i] = X_n` of the same trajectory.
pub fn overshoot_tail_check(records: &[RegenerationRecord], x_at_n: &[i64], n: u64) -> Result<OvershootReport> {
    if records.len() != x_at_n.len() {
        return domain("one position per record is required");
    }
    let mut overshoots = Vec::new();
    let mut unresolved = 0;
    for (rec, &x) in records.iter().zip(x_at_n) {
        match rec.first_after(n) {
            Some(i) => overshoots.push(rec.rhos[i] - x),
            None => unresolved += 1,
        }
    }
    let total = overshoots.len();
    if total < 10 {
        return Err(LadderError::InsufficientSample { needed: 10, got: total });
    }
    let frac = |k: i64| overshoots.iter().filter(|&&o| o >= k).count() as f64 / total as f64;
    let tail: Vec<(i64, f64)> = (1..=20).map(|k| (k, frac(k))).collect();
    let pts: Vec<(f64, f64)> = tail
        .iter()
        .filter(|(_, q)| *q * total as f64 >= 5.0)
        .map(|&(k, q)| (k as f64, q.ln()))
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    let (log_slope, log_slope_se) = match linear_fit(&xs, &ys) {
        Ok(f) => (f.slope, f.slope_se),
        Err(_) => (f64::NEG_INFINITY, 0.0),
    };
    Ok(OvershootReport {
        n,
        mass_beyond_50: overshoots.iter().filter(|&&o| o > 50).count() as f64 / total as f64,
        passes: log_slope + 3.0 * log_slope_se < 0.0,
        overshoots,
        unresolved,
        tail,
        log_slope,
        log_slope_se,
    })
}
