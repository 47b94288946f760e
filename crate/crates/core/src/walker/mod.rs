//! The biased walk on a window: kernel, sampling, the martingale `M_n`,
//! density ratios between biases, and projections onto the agile and
//! backbone walks.

mod export;
mod kernel;
mod trajectory;

pub use export::{read_trajectory, write_trajectory, write_trajectory_csv, TRAJECTORY_MAGIC};
pub use kernel::{move_terms, Kernel, KernelTable, Move, MoveTerms};
pub use trajectory::{apply_move, move_between, BoundaryExit, Trajectory};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::environment::{LadderConfig, Vertex};
use crate::error::{LadderError, Result};
use crate::params::ModelParams;
use crate::scalar::normalizer;

/// One-step law from a vertex, self-loop included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDistribution {
    pub lambda: f64,
    pub z: f64,
    pub from: Vertex,
    pub targets: Vec<(Vertex, f64)>,
}

impl StepDistribution {
    pub fn total(&self) -> f64 {
        self.targets.iter().map(|t| t.1).sum()
    }

    pub fn prob_of(&self, w: Vertex) -> f64 {
        self.targets.iter().filter(|t| t.0 == w).map(|t| t.1).sum()
    }
}

fn check_kernel_vertex(config: &LadderConfig, v: Vertex) -> Result<()> {
    if v.x < config.x_min() || v.x >= config.x_max() || v.y > 1 {
        return Err(LadderError::OutOfWindow { x: v.x, y: v.y, x_min: config.x_min(), x_max: config.x_max() });
    }
    Ok(())
}

/// Transition law of the walk from `v`.
pub fn step_distribution(config: &LadderConfig, lambda: f64, v: Vertex) -> Result<StepDistribution> {
    check_kernel_vertex(config, v)?;
    let pattern = config.incident_pattern(v);
    let table = KernelTable::<f64>::new(lambda);
    let targets = Move::ALL
        .iter()
        .filter_map(|m| table.get(pattern, *m).map(|t| (apply_move(v, *m), t.prob)))
        .collect();
    Ok(StepDistribution { lambda, z: normalizer(lambda), from: v, targets })
}

fn supported_terms(config: &LadderConfig, lambda: f64, v: Vertex, w: Vertex) -> Result<MoveTerms<f64>> {
    check_kernel_vertex(config, v)?;
    let zero = || LadderError::ZeroProbability { from_x: v.x, from_y: v.y, to_x: w.x, to_y: w.y };
    let mv = move_between(v, w).ok_or_else(zero)?;
    move_terms(lambda, config.incident_pattern(v), mv).ok_or_else(zero)
}

/// `ν(v,w) = ∂_λ log p(v,w)`.
pub fn nu(config: &LadderConfig, lambda: f64, v: Vertex, w: Vertex) -> Result<f64> {
    Ok(supported_terms(config, lambda, v, w)?.nu)
}

/// `(p″/p, ν²)` for the transition `v → w`.
pub fn second_log_terms(config: &LadderConfig, lambda: f64, v: Vertex, w: Vertex) -> Result<(f64, f64)> {
    let t = supported_terms(config, lambda, v, w)?;
    Ok((t.second, t.nu * t.nu))
}

/// A trajectory together with step-count snapshots taken after the
/// requested numbers of steps.
#[derive(Debug, Clone)]
pub struct WalkOutput {
    pub trajectory: Trajectory,
    pub snapshots: Vec<StepCounts>,
}

/// Runs `n_steps` of the walk from `start`. A move that would leave the
/// window, or a step from `x_max` (whose right edge is unknown), stops the
/// walk and records the side in [`Trajectory::exit`].
pub fn run_walk<R: RngCore + ?Sized>(
    config: &LadderConfig,
    lambda: f64,
    start: Vertex,
    n_steps: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    Ok(run_walk_observed(config, lambda, start, n_steps, &[], rng)?.trajectory)
}

/// [`run_walk`] that also records [`StepCounts`] after each of the
/// (increasing) `checkpoints`. Checkpoints past an early stop are omitted.
pub fn run_walk_observed<R: RngCore + ?Sized>(
    config: &LadderConfig,
    lambda: f64,
    start: Vertex,
    n_steps: usize,
    checkpoints: &[usize],
    rng: &mut R,
) -> Result<WalkOutput> {
    if !config.contains_column(start.x) || start.y > 1 {
        return Err(LadderError::OutOfWindow {
            x: start.x,
            y: start.y,
            x_min: config.x_min(),
            x_max: config.x_max(),
        });
    }
    if !config.in_cluster(start) {
        return Err(LadderError::NotOnCluster { x: start.x, y: start.y });
    }
    if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(LadderError::Domain("checkpoints must be strictly increasing".into()));
    }
    let params = ModelParams::new(config.p, lambda)?;
    let kernel = Kernel::new(lambda);
    let patterns = config.pattern_table();
    let last = config.n_columns() - 1;
    let mut packed: Vec<u8> = Vec::with_capacity(n_steps.div_ceil(4));
    let mut counts = StepCounts::default();
    let mut snapshots = Vec::with_capacity(checkpoints.len());
    let mut next_cp = checkpoints.iter().copied().peekable();
    let mut word = 0u8;
    let mut steps = 0usize;
    let mut exit = None;
    let mut k = (start.x - config.x_min()) as usize;
    let mut y = start.y as usize;
    const DX: [isize; 4] = [1, -1, 0, 0];
    loop {
        while next_cp.peek() == Some(&steps) {
            snapshots.push(counts);
            next_cp.next();
        }
        if steps == n_steps {
            break;
        }
        if k == last {
            exit = Some(BoundaryExit::Right);
            break;
        }
        let pattern = patterns[2 * k + y];
        let code = kernel.pick_code(pattern, rng.next_u64());
        if code == 1 && k == 0 {
            exit = Some(BoundaryExit::Left);
            break;
        }
        k = k.wrapping_add_signed(DX[code as usize]);
        y ^= (code == 2) as usize;
        counts.0[pattern as usize][code as usize] += 1;
        word |= code << (2 * (steps & 3));
        steps += 1;
        if steps & 3 == 0 {
            packed.push(word);
            word = 0;
        }
    }
    if steps & 3 != 0 {
        packed.push(word);
    }
    let mut trajectory = Trajectory::from_packed(params, start, config.seed, packed, steps);
    trajectory.exit = exit;
    Ok(WalkOutput { trajectory, snapshots })
}

/// Visits every step as `(time, vertex before the step, pattern, move)`.
pub fn for_each_step(traj: &Trajectory, config: &LadderConfig, mut f: impl FnMut(usize, Vertex, u8, Move)) {
    let mut v = traj.start;
    for (i, m) in traj.moves().enumerate() {
        f(i, v, config.incident_pattern(v), m);
        v = apply_move(v, m);
    }
}

/// `M_0 = 0, …, M_N` with increments `ν(Y_{n−1}, Y_n)` at the trajectory's bias.
pub fn martingale_path(traj: &Trajectory, config: &LadderConfig) -> Vec<f64> {
    let table = KernelTable::<f64>::new(traj.params.lambda);
    let mut out = Vec::with_capacity(traj.len() + 1);
    let mut m = 0.0;
    out.push(m);
    for_each_step(traj, config, |_, _, pattern, mv| {
        m += table.get(pattern, mv).map_or(f64::NAN, |t| t.nu);
        out.push(m);
    });
    out
}

/// Number of steps of each (pattern, move) kind. Every additive path
/// functional of the kernel is a linear function of these counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StepCounts(pub [[u64; 4]; 8]);

impl StepCounts {
    /// Counts over the first `upto` steps.
    pub fn of(traj: &Trajectory, config: &LadderConfig, upto: usize) -> Self {
        let mut c = StepCounts::default();
        let mut v = traj.start;
        for m in traj.moves().take(upto) {
            c.0[config.incident_pattern(v) as usize][m as usize] += 1;
            v = apply_move(v, m);
        }
        c
    }

    #[inline]
    pub fn add(&mut self, pattern: u8, mv: Move) {
        self.0[pattern as usize][mv as usize] += 1;
    }

    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }

    /// Net x-displacement `X_n − X_0`.
    pub fn displacement(&self) -> i64 {
        self.0.iter().map(|row| row[0] as i64 - row[1] as i64).sum()
    }

    /// `Σ count · f(terms)` over supported entries.
    pub fn sum(&self, table: &KernelTable<f64>, f: impl Fn(&MoveTerms<f64>) -> f64) -> f64 {
        let mut s = 0.0;
        for pattern in 0..8u8 {
            for mv in Move::ALL {
                let c = self.0[pattern as usize][mv as usize];
                if c > 0 {
                    s += c as f64 * table.get(pattern, mv).map_or(f64::NAN, &f);
                }
            }
        }
        s
    }

    pub fn martingale(&self, table: &KernelTable<f64>) -> f64 {
        self.sum(table, |t| t.nu)
    }

    /// `A(n) = ½ Σ (ν² − p″/p)`.
    pub fn a_term(&self, table: &KernelTable<f64>) -> f64 {
        0.5 * self.sum(table, |t| t.nu * t.nu - t.second)
    }
}

/// Log Radon–Nikodym derivative of the walk law at `λ` against `λ*` along
/// a path, with its second-order expansion
/// `log_ratio = (λ−λ*) M − (λ−λ*)² A + R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityRatio {
    pub lambda_star: f64,
    pub lambda: f64,
    pub log_ratio: f64,
    pub linear: f64,
    pub a_term: f64,
    pub remainder: f64,
}

impl DensityRatio {
    pub fn from_counts(counts: &StepCounts, lambda_star: f64, lambda: f64) -> Self {
        let base = KernelTable::<f64>::new(lambda_star);
        let alt = KernelTable::<f64>::new(lambda);
        let d = lambda - lambda_star;
        let mut log_ratio = 0.0;
        let mut remainder = 0.0;
        for pattern in 0..8u8 {
            for mv in Move::ALL {
                let c = counts.0[pattern as usize][mv as usize];
                if c == 0 {
                    continue;
                }
                let (Some(b), Some(a)) = (base.get(pattern, mv), alt.get(pattern, mv)) else {
                    log_ratio = f64::NAN;
                    continue;
                };
                let step = a.log_prob - b.log_prob;
                let curv = b.second - b.nu * b.nu;
                log_ratio += c as f64 * step;
                remainder += c as f64 * (step - d * b.nu - 0.5 * d * d * curv);
            }
        }
        Self {
            lambda_star,
            lambda,
            log_ratio,
            linear: d * counts.martingale(&base),
            a_term: counts.a_term(&base),
            remainder,
        }
    }

    /// `(λ−λ*) M − (λ−λ*)² A + R`.
    pub fn reconstructed(&self) -> f64 {
        let d = self.lambda - self.lambda_star;
        self.linear - d * d * self.a_term + self.remainder
    }
}

/// Density ratio of the law at `λ` against `λ*` along a trajectory drawn at `λ*`.
pub fn density_ratio(config: &LadderConfig, trajectory: &Trajectory, lambda_star: f64, lambda: f64) -> DensityRatio {
    let counts = StepCounts::of(trajectory, config, trajectory.len());
    DensityRatio::from_counts(&counts, lambda_star, lambda)
}

/// Agile walk, backbone walk and the backbone/trap time split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projections {
    /// The path with self-loop steps removed.
    pub agile: Vec<Vertex>,
    /// The agile path restricted to backbone vertices, repeated vertices merged.
    pub backbone: Vec<Vertex>,
    pub time_on_backbone: u64,
    pub time_in_traps: u64,
}

pub fn agile_and_backbone_projections(trajectory: &Trajectory, config: &LadderConfig) -> Projections {
    let mut agile = vec![trajectory.start];
    let mut backbone = Vec::new();
    let mut on_b = 0u64;
    let mut v = trajectory.start;
    let visit = |v: Vertex, backbone: &mut Vec<Vertex>| {
        if config.on_backbone(v) && backbone.last() != Some(&v) {
            backbone.push(v);
        }
    };
    visit(v, &mut backbone);
    for m in trajectory.moves() {
        if config.on_backbone(v) {
            on_b += 1;
        }
        v = apply_move(v, m);
        if m != Move::Stay {
            agile.push(v);
            visit(v, &mut backbone);
        }
    }
    let n = trajectory.len() as u64;
    Projections { agile, backbone, time_on_backbone: on_b, time_in_traps: n - on_b }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{annotate, Slab, TState};
    use crate::seed::rng_from_seed;
    use rand::Rng;

    fn ladder(slabs: Vec<Slab>, x_min: i64) -> LadderConfig {
        annotate(&LadderConfig::new(0.5, 0, x_min, TState::BOTH, slabs).unwrap())
    }

    fn open_ladder(n: usize) -> LadderConfig {
        ladder(vec![Slab::OPEN; n], -(n as i64 / 2))
    }

    #[test]
    fn step_distribution_examples() {
        let cfg = open_ladder(8);
        let d = step_distribution(&cfg, 0.0, Vertex::ORIGIN).unwrap();
        for w in cfg.neighbors(Vertex::ORIGIN) {
            assert!((d.prob_of(w) - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(d.prob_of(Vertex::ORIGIN), 0.0);

        // Only the right edge open at the origin: vertical closed, left closed.
        let mut slabs = vec![Slab::OPEN; 8];
        slabs[4] = Slab::new(false, true, false);
        let cfg = ladder(slabs, -4);
        let d = step_distribution(&cfg, 1.0, Vertex::ORIGIN).unwrap();
        assert!((d.z - 4.086161).abs() < 1e-6);
        assert!((d.prob_of(Vertex::new(1, 0)) - 0.665240).abs() < 1e-6);
        assert!((d.prob_of(Vertex::ORIGIN) - 0.334760).abs() < 1e-6);
        assert!((d.total() - 1.0).abs() < 1e-15);
        assert!(step_distribution(&cfg, 1.0, Vertex::new(cfg.x_max(), 0)).is_err());
    }

    #[test]
    fn nu_and_second_terms_errors() {
        let mut slabs = vec![Slab::OPEN; 6];
        slabs[3] = Slab::new(true, true, false);
        let cfg = ladder(slabs, -3);
        assert!(nu(&cfg, 0.5, Vertex::ORIGIN, Vertex::new(0, 1)).is_err());
        assert!(nu(&cfg, 0.5, Vertex::ORIGIN, Vertex::new(2, 0)).is_err());
        assert!(nu(&cfg, 0.0, Vertex::ORIGIN, Vertex::ORIGIN).unwrap().abs() < 1e-15);
        let (s, n2) = second_log_terms(&cfg, 0.5, Vertex::ORIGIN, Vertex::new(1, 0)).unwrap();
        assert!(s.is_finite() && n2 >= 0.0);
    }

    /// Every path of length `n` from `start`, with its probability at `lambda`.
    fn enumerate(cfg: &LadderConfig, lambda: f64, start: Vertex, n: usize) -> Vec<(Vec<Move>, f64)> {
        let mut out = vec![(Vec::new(), 1.0, start)];
        for _ in 0..n {
            let mut next = Vec::new();
            for (path, prob, v) in out {
                let d = step_distribution(cfg, lambda, v).unwrap();
                for (w, q) in d.targets {
                    let mut p2 = path.clone();
                    p2.push(move_between(v, w).unwrap());
                    next.push((p2, prob * q, w));
                }
            }
            out = next;
        }
        out.into_iter().map(|(p, q, _)| (p, q)).collect()
    }

    #[test]
    fn measure_change_is_exact_on_enumerated_paths() {
        let mut rng = rng_from_seed(3);
        let slabs: Vec<Slab> = (0..9).map(|_| Slab::from_bits(rng.gen_range(0..8) | Slab::H0)).collect();
        let mut slabs = slabs;
        slabs[4] = Slab::OPEN;
        let cfg = ladder(slabs, -4);
        let (ls, l) = (0.4, 0.75);
        let params = ModelParams::new(0.5, ls).unwrap();
        let base = enumerate(&cfg, ls, Vertex::ORIGIN, 3);
        let alt = enumerate(&cfg, l, Vertex::ORIGIN, 3);
        let (mut mass, mut mean_x) = (0.0, 0.0);
        for (path, prob) in &base {
            let traj = Trajectory::from_moves(params, Vertex::ORIGIN, 0, path);
            let w = density_ratio(&cfg, &traj, ls, l).log_ratio.exp();
            mass += prob * w;
            mean_x += prob * w * traj.final_vertex().x as f64;
        }
        let direct: f64 = alt
            .iter()
            .map(|(path, prob)| prob * path.iter().map(|m| m.dx()).sum::<i64>() as f64)
            .sum();
        assert!((mass - 1.0).abs() < 1e-12, "{mass}");
        assert!((mean_x - direct).abs() < 1e-12);
    }

    #[test]
    fn density_ratio_decomposition_reconstructs() {
        let mut rng = rng_from_seed(9);
        let slabs: Vec<Slab> = (0..400).map(|_| Slab::from_bits(rng.gen_range(0..8) | Slab::H0)).collect();
        let cfg = ladder(slabs, -200);
        let traj = run_walk(&cfg, 0.3, Vertex::ORIGIN, 150, &mut rng).unwrap();
        let same = density_ratio(&cfg, &traj, 0.3, 0.3);
        assert_eq!(same.log_ratio, 0.0);
        assert_eq!(same.linear, 0.0);
        assert!(same.remainder.abs() < 1e-15);
        for d in [-0.05, -0.01, 0.02, 0.05] {
            let r = density_ratio(&cfg, &traj, 0.3, 0.3 + d);
            assert!((r.reconstructed() - r.log_ratio).abs() < 1e-9);
            // The remainder is third order in the bias difference.
            assert!(r.remainder.abs() < 1e-2 * d.abs().powi(2) * traj.len() as f64);
        }
        let m = martingale_path(&traj, &cfg);
        let counts = StepCounts::of(&traj, &cfg, traj.len());
        let table = KernelTable::<f64>::new(0.3);
        assert!((counts.martingale(&table) - m[traj.len()]).abs() < 1e-9);
        assert_eq!(counts.displacement(), traj.final_vertex().x);
    }

    #[test]
    fn martingale_increments_are_bounded_by_enumerated_constant() {
        let mut rng = rng_from_seed(21);
        let slabs: Vec<Slab> = (0..600).map(|_| Slab::from_bits(rng.gen_range(0..8) | Slab::H0)).collect();
        let cfg = ladder(slabs, -300);
        for lambda in [0.0, 0.4, 1.3] {
            let traj = run_walk(&cfg, lambda, Vertex::ORIGIN, 500, &mut rng).unwrap();
            let c = KernelTable::<f64>::new(lambda).nu_bound();
            let m = martingale_path(&traj, &cfg);
            assert_eq!(m[0], 0.0);
            assert!(m.windows(2).all(|w| (w[1] - w[0]).abs() <= c + 1e-15));
        }
    }

    #[test]
    fn walk_is_reproducible_and_follows_open_edges() {
        let mut rng = rng_from_seed(5);
        let slabs: Vec<Slab> = (0..300).map(|_| Slab::from_bits(rng.gen_range(0..8) | Slab::H0)).collect();
        let cfg = ladder(slabs, -150);
        let a = run_walk(&cfg, 0.5, Vertex::ORIGIN, 1000, &mut rng_from_seed(1)).unwrap();
        let b = run_walk(&cfg, 0.5, Vertex::ORIGIN, 1000, &mut rng_from_seed(1)).unwrap();
        assert_eq!(a, b);
        assert!(a.follows(&cfg));
        assert!(a.x_path().windows(2).all(|w| (w[1] - w[0]).abs() <= 1));
    }

    #[test]
    fn walk_stops_at_window_edges() {
        let cfg = open_ladder(6);
        let t = run_walk(&cfg, 3.0, Vertex::ORIGIN, 10_000, &mut rng_from_seed(2)).unwrap();
        assert_eq!(t.exit, Some(BoundaryExit::Right));
        assert_eq!(t.final_vertex().x, cfg.x_max());
        let mut slabs = vec![Slab::new(true, false, false); 4];
        slabs[0] = Slab::OPEN;
        slabs[1] = Slab::OPEN;
        let cfg = ladder(slabs, 0);
        let err = run_walk(&cfg, 0.5, Vertex::new(3, 1), 10, &mut rng_from_seed(2));
        assert!(matches!(err, Err(LadderError::NotOnCluster { .. })));
    }

    #[test]
    fn observed_snapshots_match_recounting() {
        let mut rng = rng_from_seed(8);
        let slabs: Vec<Slab> = (0..500).map(|_| Slab::from_bits(rng.gen_range(0..8) | Slab::H0)).collect();
        let cfg = ladder(slabs, -250);
        let out = run_walk_observed(&cfg, 0.6, Vertex::ORIGIN, 400, &[0, 10, 399, 400], &mut rng).unwrap();
        assert_eq!(out.snapshots.len(), 4);
        for (s, n) in out.snapshots.iter().zip([0, 10, 399, 400]) {
            assert_eq!(*s, StepCounts::of(&out.trajectory, &cfg, n));
        }
        assert!(run_walk_observed(&cfg, 0.6, Vertex::ORIGIN, 4, &[3, 3], &mut rng).is_err());
    }

    #[test]
    fn projections_partition_time() {
        let cfg = open_ladder(10);
        let params = ModelParams::new(0.5, 0.5).unwrap();
        let moves = [Move::Right, Move::Vertical, Move::Left, Move::Right];
        let t = Trajectory::from_moves(params, Vertex::ORIGIN, 0, &moves);
        let pr = agile_and_backbone_projections(&t, &cfg);
        assert_eq!(pr.agile, t.vertices().collect::<Vec<_>>());
        assert_eq!(pr.backbone, pr.agile);
        assert_eq!(pr.time_in_traps, 0);

        // A trap: open vertical at 0, trap body on 1..=2, exit on the bottom at 3.
        let mut slabs = vec![Slab::OPEN; 10];
        slabs[5] = Slab::TRAP_BODY;
        slabs[6] = Slab::TRAP_BODY;
        slabs[7] = Slab::new(true, false, false);
        let cfg = ladder(slabs, -4);
        assert_eq!(cfg.traps().len(), 1);
        let moves = [Move::Vertical, Move::Right, Move::Stay, Move::Left, Move::Vertical, Move::Right];
        let t = Trajectory::from_moves(params, Vertex::ORIGIN, 0, &moves);
        let pr = agile_and_backbone_projections(&t, &cfg);
        assert_eq!(pr.agile.len(), 6);
        assert_eq!(pr.time_on_backbone + pr.time_in_traps, t.len() as u64);
        assert_eq!(pr.time_in_traps, 2);
        assert_eq!(pr.backbone, vec![Vertex::ORIGIN, Vertex::new(0, 1), Vertex::ORIGIN, Vertex::new(1, 0)]);
    }
}
