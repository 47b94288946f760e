//! Time spent by the walk inside individual traps.

use serde::{Deserialize, Serialize};

use crate::environment::LadderConfig;
use crate::error::Result;
use crate::regeneration::{moment_diagnostic, MomentCurve};
use crate::walker::{for_each_step, Trajectory};

/// Total time spent at the dead-end vertices of each trap that is fully
/// behind the walk: `a ≥ start.x` and `b + cutoff < X_N`. Traps the walk
/// never entered contribute 0. Times `0..N−1` are counted.
pub fn trap_sojourn_times(traj: &Trajectory, config: &LadderConfig, cutoff: i64) -> Vec<u64> {
    let final_x = traj.final_vertex().x;
    let eligible: Vec<usize> = config
        .traps()
        .iter()
        .enumerate()
        .filter(|(_, t)| t.a >= traj.start.x && t.b + cutoff < final_x)
        .map(|(i, _)| i)
        .collect();
    let Some((&first, &last)) = eligible.first().zip(eligible.last()) else {
        return Vec::new();
    };
    let mut times = vec![0u64; last - first + 1];
    let traps = config.traps();
    for_each_step(traj, config, |_, v, _, _| {
        if let Some(t) = config.trap_covering(v.x) {
            if v.y != t.exit_level {
                let k = traps.partition_point(|u| u.a < t.a);
                if (first..=last).contains(&k) {
                    times[k - first] += 1;
                }
            }
        }
    });
    times
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapSojournReport {
    pub kappa: f64,
    pub traps: usize,
    pub entered: usize,
    pub curve: MomentCurve,
    /// Ratio of the final moment to the moment at one sixteenth of the sample.
    pub growth: f64,
    pub stabilizes: bool,
}

/// Empirical `κ`-th moment curve of per-trap sojourn times. The curve is
/// called stable when it grows by less than half over the last sixteenfold
/// increase of the sample.
pub fn trap_sojourn_moments(sojourns: &[u64], kappa: f64) -> Result<TrapSojournReport> {
    let xs: Vec<f64> = sojourns.iter().map(|&t| t as f64).collect();
    let curve = moment_diagnostic(&xs, kappa)?;
    let growth = curve.growth_over(16.0);
    Ok(TrapSojournReport {
        kappa,
        traps: sojourns.len(),
        entered: sojourns.iter().filter(|&&t| t > 0).count(),
        stabilizes: growth.is_finite() && growth < 1.5,
        growth,
        curve,
    })
}
