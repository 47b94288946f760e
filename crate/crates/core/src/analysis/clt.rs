//! Joint fluctuations of `(X_n − n v̄, M_n)`: covariance estimates,
//! normality checks, the derivative of the speed as a covariance, and the
//! second-order terms of the measure change.
//!
//! Batches are stored as [`StepCounts`] snapshots per replica and
//! checkpoint. `X_n`, `M_n`, `A(n)` and every density ratio are linear in
//! those counts, so one batch serves every estimator here.

use serde::{Deserialize, Serialize};

use crate::error::{domain, LadderError, Result};
use crate::regeneration::{EstimateReport, IncrementSample};
use crate::stats::{ks_normal, normal_cdf, KsResult, RunningStats};
use crate::walker::{DensityRatio, KernelTable, StepCounts};

/// Minimum number of replicas for covariance-based estimators.
pub const MIN_REPLICAS: usize = 1000;

/// Step-count snapshots of a batch of walks at common times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointBatch {
    pub lambda: f64,
    pub times: Vec<usize>,
    /// `counts[replica][level]`.
    pub counts: Vec<Vec<StepCounts>>,
    pub seeds: Vec<u64>,
}

impl CheckpointBatch {
    pub fn replicas(&self) -> usize {
        self.counts.len()
    }

    pub fn level_of(&self, n: usize) -> Option<usize> {
        self.times.iter().position(|&t| t == n)
    }

    /// `X_n` of every replica at a level.
    pub fn x(&self, level: usize) -> Vec<f64> {
        self.counts.iter().map(|c| c[level].displacement() as f64).collect()
    }

    /// `M_n` of every replica at a level.
    pub fn m(&self, level: usize) -> Vec<f64> {
        let table = KernelTable::<f64>::new(self.lambda);
        self.counts.iter().map(|c| c[level].martingale(&table)).collect()
    }

    fn check(&self) -> Result<()> {
        if self.replicas() < MIN_REPLICAS {
            return Err(LadderError::InsufficientSample { needed: MIN_REPLICAS, got: self.replicas() });
        }
        if self.times.is_empty() {
            return domain("batch has no checkpoints");
        }
        Ok(())
    }
}

/// Estimated `Σ = (σ_ij)` from the `n^{−1}` second moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEstimate {
    pub sigma11: f64,
    pub sigma22: f64,
    pub sigma12: f64,
    pub se11: f64,
    pub se22: f64,
    pub se12: f64,
    pub n: u64,
    pub replicas: usize,
}

impl CovarianceEstimate {
    /// From centered displacements `b = X_n − n v̄` and martingale values.
    pub fn from_samples(b: &[f64], m: &[f64], n: u64) -> Self {
        let nf = n as f64;
        let s11: RunningStats = b.iter().map(|x| x * x / nf).collect();
        let s22: RunningStats = m.iter().map(|x| x * x / nf).collect();
        let s12: RunningStats = b.iter().zip(m).map(|(x, y)| x * y / nf).collect();
        Self {
            sigma11: s11.mean(),
            sigma22: s22.mean(),
            sigma12: s12.mean(),
            se11: s11.se(),
            se22: s22.se(),
            se12: s12.se(),
            n,
            replicas: b.len(),
        }
    }

    /// Cauchy–Schwarz within three combined standard errors.
    pub fn is_consistent(&self) -> bool {
        let bound = (self.sigma11 * self.sigma22).sqrt();
        let slack = 3.0 * (self.se12.powi(2) + 0.25 * bound.powi(2) * ((self.se11 / self.sigma11).powi(2) + (self.se22 / self.sigma22).powi(2))).sqrt();
        self.sigma11 >= 0.0 && self.sigma22 >= 0.0 && self.sigma12.abs() <= bound + slack
    }
}

/// Independence of `B_n(½)` and `B_n(1) − B_n(½)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncrementIndependence {
    pub correlation: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltReport {
    pub covariance: CovarianceEstimate,
    pub ks_displacement: KsResult,
    pub ks_martingale: KsResult,
    pub independence: IncrementIndependence,
    pub level: f64,
    pub normal: bool,
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Covariance and normality at the final checkpoint `n`; the batch must
/// also hold the checkpoint `n/2`.
pub fn clt_suite(batch: &CheckpointBatch, speed: f64, level: f64) -> Result<CltReport> {
    batch.check()?;
    let top = batch.times.len() - 1;
    let n = batch.times[top];
    let half = batch
        .level_of(n / 2)
        .ok_or_else(|| LadderError::Domain(format!("batch needs a checkpoint at n/2 = {}", n / 2)))?;
    let nf = n as f64;
    let b: Vec<f64> = batch.x(top).iter().map(|x| x - nf * speed).collect();
    let m = batch.m(top);
    let covariance = CovarianceEstimate::from_samples(&b, &m, n as u64);
    let ks_displacement = ks_normal(&b)?;
    let ks_martingale = ks_normal(&m)?;
    let t_half = batch.times[half] as f64;
    let first: Vec<f64> = batch.x(half).iter().map(|x| x - t_half * speed).collect();
    let second: Vec<f64> = b.iter().zip(&first).map(|(a, f)| a - f).collect();
    let r = correlation(&first, &second);
    let z = r.atanh() * (b.len() as f64 - 3.0).sqrt();
    let independence = IncrementIndependence { correlation: r, p_value: 2.0 * (1.0 - normal_cdf(z.abs())) };
    let normal = ks_displacement.p_value > level && ks_martingale.p_value > level && independence.p_value > level;
    Ok(CltReport { covariance, ks_displacement, ks_martingale, independence, level, normal })
}

/// Growth of `n^{−1} E[(X_n − n v̄)²]` across horizons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub levels: Vec<CovarianceEstimate>,
    /// `σ11` increases at every step and the last level exceeds the first
    /// by more than three combined standard errors.
    pub diverges: bool,
}

pub fn variance_divergence(levels: &[CovarianceEstimate]) -> DivergenceReport {
    let increasing = levels.len() >= 2 && levels.windows(2).all(|w| w[1].sigma11 > w[0].sigma11);
    let diverges = increasing && {
        let (a, b) = (levels[0], levels[levels.len() - 1]);
        b.sigma11 - a.sigma11 > 3.0 * a.se11.hypot(b.se11)
    };
    DivergenceReport { levels: levels.to_vec(), diverges }
}

/// `σ12 = n^{−1} E[(X_n − n v̄) M_n]` at the final checkpoint.
pub fn derivative_via_covariance(batch: &CheckpointBatch, speed: f64) -> Result<EstimateReport> {
    batch.check()?;
    let top = batch.times.len() - 1;
    let n = batch.times[top];
    let b: Vec<f64> = batch.x(top).iter().map(|x| x - n as f64 * speed).collect();
    let c = CovarianceEstimate::from_samples(&b, &batch.m(top), n as u64);
    Ok(EstimateReport::new(c.sigma12, c.se12, batch.replicas(), "covariance")
        .with_param("lambda", batch.lambda)
        .with_param("n", n as f64)
        .with_param("speed", speed))
}

/// Importance-sampled difference quotient at `λ* ± δ` with `δ²n = α`:
/// the mean of `(X_n − n v̄)(e^{L₊} − e^{L₋}) / (2δn)`, where `L±` are the
/// log density ratios. Since `E[e^{L±}] = 1`, this estimates
/// `(E_{λ*+δ}[X_n] − E_{λ*−δ}[X_n]) / (2δn)`.
pub fn importance_sampled_derivative(batch: &CheckpointBatch, speed: f64, alpha: f64) -> Result<EstimateReport> {
    batch.check()?;
    if !(alpha > 0.0) {
        return domain("α must be positive");
    }
    let top = batch.times.len() - 1;
    let n = batch.times[top] as f64;
    let delta = (alpha / n).sqrt();
    let s: RunningStats = batch
        .counts
        .iter()
        .map(|c| {
            let c = &c[top];
            let up = DensityRatio::from_counts(c, batch.lambda, batch.lambda + delta).log_ratio;
            let down = DensityRatio::from_counts(c, batch.lambda, batch.lambda - delta).log_ratio;
            (c.displacement() as f64 - n * speed) * (up.exp() - down.exp()) / (2.0 * delta * n)
        })
        .collect();
    Ok(EstimateReport::new(s.mean(), s.se(), batch.replicas(), "importance-sampled")
        .with_param("alpha", alpha)
        .with_param("delta", delta)
        .with_param("n", n))
}

/// Central difference `(v̄(λ+h) − v̄(λ−h)) / 2h` with propagated error.
pub fn finite_difference(plus: &EstimateReport, minus: &EstimateReport, h: f64) -> EstimateReport {
    EstimateReport::new(
        (plus.estimate - minus.estimate) / (2.0 * h),
        plus.se.hypot(minus.se) / (2.0 * h),
        plus.n + minus.n,
        "finite-difference",
    )
    .with_param("h", h)
}

/// Richardson extrapolation `(4 D(h/2) − D(h)) / 3` of two central differences.
pub fn richardson(coarse: &EstimateReport, fine: &EstimateReport) -> EstimateReport {
    EstimateReport::new(
        (4.0 * fine.estimate - coarse.estimate) / 3.0,
        (16.0 * fine.se.powi(2) + coarse.se.powi(2)).sqrt() / 3.0,
        coarse.n + fine.n,
        "richardson",
    )
}

/// `σ22 = E[η²]/E[τ₂ − τ₁]` from regeneration increments, ratio-estimator SE.
pub fn sigma22_from_regenerations(sample: &IncrementSample) -> Result<EstimateReport> {
    let n = sample.len();
    if n < 2 {
        return Err(LadderError::InsufficientSample { needed: 2, got: n });
    }
    let nf = n as f64;
    let mt = sample.tau.iter().map(|&t| t as f64).sum::<f64>() / nf;
    let me = sample.eta.iter().map(|e| e * e).sum::<f64>() / nf;
    let r = me / mt;
    let resid: RunningStats = sample.eta.iter().zip(&sample.tau).map(|(e, &t)| e * e - r * t as f64).collect();
    Ok(EstimateReport::new(r, (resid.variance() / nf).sqrt() / mt, n, "regeneration-sigma22"))
}

/// One level of the second-order expansion along a bias schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaylorLevel {
    pub n: usize,
    pub delta: f64,
    /// Mean of `δ² A(n)`.
    pub scaled_a: f64,
    pub scaled_a_se: f64,
    /// Mean of `|R(n)| / (δ² n)`.
    pub scaled_remainder: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaylorReport {
    pub alpha: f64,
    pub r: f64,
    pub levels: Vec<TaylorLevel>,
    /// `(α/2) σ22` when `r = 2`, otherwise 0.
    pub target: f64,
    pub target_se: f64,
    pub passes: bool,
}

/// `δ² A(n)` along the schedule `δ = (α/n)^{1/r}`, `1 < r ≤ 2`.
///
/// For `r = 2` the last level must lie within three combined standard
/// errors of `(α/2) σ22`, with `σ22` estimated from the same batch. For
/// `r < 2` the values must decrease towards 0.
pub fn taylor_a_limit(batch: &CheckpointBatch, alpha: f64, r: f64) -> Result<TaylorReport> {
    batch.check()?;
    if !(alpha > 0.0 && r > 1.0 && r <= 2.0) {
        return domain("need α > 0 and 1 < r <= 2");
    }
    let table = KernelTable::<f64>::new(batch.lambda);
    let mut levels = Vec::new();
    for (j, &n) in batch.times.iter().enumerate() {
        if n == 0 {
            continue;
        }
        let delta = (alpha / n as f64).powf(1.0 / r);
        let mut a = RunningStats::default();
        let mut rem = RunningStats::default();
        for c in &batch.counts {
            a.push(delta * delta * c[j].a_term(&table));
            let d = DensityRatio::from_counts(&c[j], batch.lambda, batch.lambda + delta);
            rem.push(d.remainder.abs() / (delta * delta * n as f64));
        }
        levels.push(TaylorLevel { n, delta, scaled_a: a.mean(), scaled_a_se: a.se(), scaled_remainder: rem.mean() });
    }
    let last = *levels.last().ok_or_else(|| LadderError::Domain("no positive checkpoint".into()))?;
    let (target, target_se, passes) = if r == 2.0 {
        let top = batch.times.len() - 1;
        let m = batch.m(top);
        let s: RunningStats = m.iter().map(|x| x * x / batch.times[top] as f64).collect();
        let (t, tse) = (0.5 * alpha * s.mean(), 0.5 * alpha * s.se());
        (t, tse, (last.scaled_a - t).abs() <= 3.0 * last.scaled_a_se.hypot(tse))
    } else {
        (0.0, 0.0, levels.windows(2).all(|w| w[1].scaled_a < w[0].scaled_a))
    };
    Ok(TaylorReport { alpha, r, levels, target, target_se, passes })
}

/// Empirical `E[exp(t M_n / √n)]` with its standard error, and the Azuma
/// bound `exp(t² c_λ² / 2)`.
pub fn exponential_moment(m: &[f64], n: usize, t: f64, c_lambda: f64) -> (f64, f64, f64) {
    let s: RunningStats = m.iter().map(|x| (t * x / (n as f64).sqrt()).exp()).collect();
    (s.mean(), s.se(), (0.5 * t * t * c_lambda * c_lambda).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walker::Move;

    fn fake_batch(replicas: usize) -> CheckpointBatch {
        // Replica i moves right i % 5 times and stays otherwise, at pattern 3.
        let counts = (0..replicas)
            .map(|i| {
                [10usize, 20]
                    .iter()
                    .map(|&n| {
                        let mut c = StepCounts::default();
                        let r = (i % 5).min(n);
                        for _ in 0..r {
                            c.add(3, Move::Right);
                        }
                        for _ in r..n {
                            c.add(3, Move::Stay);
                        }
                        c
                    })
                    .collect()
            })
            .collect();
        CheckpointBatch { lambda: 0.4, times: vec![10, 20], counts, seeds: vec![0; replicas] }
    }

    #[test]
    fn covariance_of_exact_samples() {
        let b = [1.0, -1.0, 2.0, -2.0];
        let m = [1.0, -1.0, -2.0, 2.0];
        let c = CovarianceEstimate::from_samples(&b, &m, 2);
        assert_eq!(c.sigma11, 1.25);
        assert_eq!(c.sigma22, 1.25);
        assert_eq!(c.sigma12, -0.75);
        assert!(c.is_consistent());
    }

    #[test]
    fn batch_accessors_and_guards() {
        let batch = fake_batch(1000);
        assert_eq!(batch.x(0)[3], 3.0);
        assert_eq!(batch.level_of(20), Some(1));
        assert!(clt_suite(&batch, 0.1, 0.01).is_ok());
        assert!(derivative_via_covariance(&fake_batch(10), 0.1).is_err());
        let a = taylor_a_limit(&batch, 1.0, 2.0).unwrap();
        assert_eq!(a.levels.len(), 2);
    }

    #[test]
    fn divergence_rule() {
        let mk = |s: f64| CovarianceEstimate { sigma11: s, sigma22: 1.0, sigma12: 0.0, se11: 0.1, se22: 0.1, se12: 0.1, n: 1, replicas: 1 };
        assert!(variance_divergence(&[mk(1.0), mk(2.0), mk(4.0)]).diverges);
        assert!(!variance_divergence(&[mk(1.0), mk(1.1), mk(1.05)]).diverges);
    }

    #[test]
    fn finite_difference_and_richardson() {
        let at = |v: f64| EstimateReport::new(v, 0.0, 1, "x");
        // v(λ) = λ³: D(h) = 3λ² + h², Richardson removes the h² term.
        let l: f64 = 0.3;
        let d1 = finite_difference(&at((l + 0.1f64).powi(3)), &at((l - 0.1f64).powi(3)), 0.1);
        let d2 = finite_difference(&at((l + 0.05f64).powi(3)), &at((l - 0.05f64).powi(3)), 0.05);
        assert!((richardson(&d1, &d2).estimate - 3.0 * l * l).abs() < 1e-12);
    }

    #[test]
    fn regeneration_sigma22_ratio() {
        let s = IncrementSample { tau: vec![4, 4, 4], rho: vec![1, 1, 1], eta: vec![2.0, -2.0, 2.0], seeds: vec![0; 3] };
        let r = sigma22_from_regenerations(&s).unwrap();
        assert!((r.estimate - 1.0).abs() < 1e-15 && r.se < 1e-15);
    }
}
