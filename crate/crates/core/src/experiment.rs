//! Replica farming. Every replica walks from the pre-regeneration point at
//! the origin of a two-sided cycle-stationary window. If the walk reaches an
//! edge of the window, the window is doubled on that side and the walk is
//! replayed from the same seeds; because window extensions are prefix
//! stable, the result is the walk in the infinite environment.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::clt::CheckpointBatch;
use crate::environment::{build_transfer_matrix, sample_cycle_stationary_two_sided, LadderConfig, TransferMatrix, Vertex};
use crate::error::{domain, Result};
use crate::scalar::{normalizer, normalizer_d1};
use crate::seed::{derive_seed, rng_from_seed, substream};
use crate::walker::{run_walk_observed, BoundaryExit, StepCounts, Trajectory};

/// Parameters of a batch of walks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkSetup {
    pub p: f64,
    pub lambda: f64,
    pub n_steps: usize,
    pub left_columns: usize,
    pub right_columns: usize,
    pub max_doublings: u32,
    /// Times at which step-count snapshots are recorded.
    pub checkpoints: Vec<usize>,
}

impl WalkSetup {
    pub fn new(p: f64, lambda: f64, n_steps: usize) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return domain(format!("edge density must lie in (0,1), got {p}"));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return domain(format!("bias must be finite and >= 0, got {lambda}"));
        }
        let n = n_steps as f64;
        let drift = normalizer_d1(lambda) / normalizer(lambda);
        let spread = 20.0 * n.sqrt() + 200.0;
        let right = (0.6 * n * drift + spread).ceil() as usize;
        let left = if lambda >= 0.1 { 256 } else { spread.ceil() as usize + 256 };
        Ok(Self { p, lambda, n_steps, left_columns: left, right_columns: right, max_doublings: 16, checkpoints: Vec::new() })
    }
}

/// One finished walk with its environment.
#[derive(Debug, Clone)]
pub struct Replica {
    pub index: u64,
    pub seed: u64,
    pub config: LadderConfig,
    pub trajectory: Trajectory,
    pub snapshots: Vec<StepCounts>,
    pub doublings: u32,
}

/// Runs one replica with seed `seed`, enlarging the window until the walk
/// stays inside. A walk that still exits after `max_doublings` is returned
/// with its exit flag set.
pub fn run_replica(tm: &TransferMatrix, setup: &WalkSetup, index: u64, seed: u64) -> Result<Replica> {
    let (mut left, mut right) = (setup.left_columns, setup.right_columns);
    let mut doublings = 0;
    loop {
        let mut config = sample_cycle_stationary_two_sided(
            tm,
            left,
            right,
            &mut rng_from_seed(substream(seed, "env-left")),
            &mut rng_from_seed(substream(seed, "env-right")),
        )?;
        config.seed = seed;
        let mut walk_rng = rng_from_seed(substream(seed, "walk"));
        let out = run_walk_observed(
            &config,
            setup.lambda,
            Vertex::ORIGIN,
            setup.n_steps,
            &setup.checkpoints,
            &mut walk_rng,
        )?;
        let (mut trajectory, snapshots) = (out.trajectory, out.snapshots);
        trajectory.seed = seed;
        match trajectory.exit {
            Some(side) if doublings < setup.max_doublings => {
                match side {
                    BoundaryExit::Left => left *= 2,
                    BoundaryExit::Right => right *= 2,
                }
                doublings += 1;
            }
            _ => return Ok(Replica { index, seed, config, trajectory, snapshots, doublings }),
        }
    }
}

/// Results of a batch in replica order, with the indices of replicas that
/// had to be discarded because their walk left every window tried.
#[derive(Debug, Clone)]
pub struct Batch<T> {
    pub results: Vec<T>,
    pub seeds: Vec<u64>,
    pub discarded: Vec<u64>,
    pub doublings: u64,
}

impl<T> Batch<T> {
    pub fn discard_rate(&self) -> f64 {
        let total = self.results.len() + self.discarded.len();
        if total == 0 {
            0.0
        } else {
            self.discarded.len() as f64 / total as f64
        }
    }
}

/// Runs `replicas` walks in parallel and maps each through `f`. Replica `i`
/// uses `derive_seed(master, offset + i, tag)`, so results do not depend on
/// the number of workers.
pub fn run_batch<T, F>(setup: &WalkSetup, master: u64, tag: &str, offset: u64, replicas: usize, f: F) -> Result<Batch<T>>
where
    T: Send,
    F: Fn(&Replica) -> T + Sync + Send,
{
    let tm = build_transfer_matrix(setup.p)?;
    // (index, seed, value if kept, restarts)
    type Outcome<T> = (u64, u64, Option<T>, u32);
    let outcomes: Vec<Result<Outcome<T>>> = (0..replicas as u64)
        .into_par_iter()
        .map(|i| {
            let index = offset + i;
            let seed = derive_seed(master, index, tag);
            let rep = run_replica(&tm, setup, index, seed)?;
            let value = if rep.trajectory.exit.is_none() { Some(f(&rep)) } else { None };
            Ok((index, seed, value, rep.doublings))
        })
        .collect();
    let mut batch = Batch { results: Vec::new(), seeds: Vec::new(), discarded: Vec::new(), doublings: 0 };
    for o in outcomes {
        let (index, seed, value, doublings) = o?;
        batch.doublings += doublings as u64;
        match value {
            Some(v) => {
                batch.results.push(v);
                batch.seeds.push(seed);
            }
            None => batch.discarded.push(index),
        }
    }
    Ok(batch)
}

/// Runs a batch recording step-count snapshots at `setup.checkpoints`.
pub fn run_checkpoint_batch(setup: &WalkSetup, master: u64, tag: &str, offset: u64, replicas: usize) -> Result<(CheckpointBatch, Vec<u64>)> {
    if setup.checkpoints.is_empty() {
        return domain("checkpoint batch needs at least one checkpoint");
    }
    let batch = run_batch(setup, master, tag, offset, replicas, |r| r.snapshots.clone())?;
    Ok((
        CheckpointBatch { lambda: setup.lambda, times: setup.checkpoints.clone(), counts: batch.results, seeds: batch.seeds },
        batch.discarded,
    ))
}
