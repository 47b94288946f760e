//! Subcommand bodies. Each records failed assertions on its [`Run`]; the
//! driver in [`run`] writes the manifest and maps failures to the exit code.

use std::io::Write;
use std::time::Instant;

use serde::Serialize;
use serde_json::json;

use ladderlab::analysis::clt::{
    clt_suite, derivative_via_covariance, finite_difference, importance_sampled_derivative, richardson,
    variance_divergence, CheckpointBatch, CovarianceEstimate,
};
use ladderlab::analysis::formulas::{compute_lambda_c, expected_trap_return_time, trap_length_pmf, trap_moment_bounds};
use ladderlab::analysis::trap_chain::{trap_return_moment_mc, trap_return_time_exact, TrapChainSpec};
use ladderlab::analysis::traps::{trap_sojourn_moments, trap_sojourn_times};
use ladderlab::environment::{annotate, build_transfer_matrix, sample_cycle_stationary, write_dump, write_snapshot};
use ladderlab::experiment::{run_batch, run_checkpoint_batch, Batch, WalkSetup};
use ladderlab::regeneration::{
    default_hill_k, detect_regenerations, direct_speed, mz_fluctuation_check, speed_estimate, tail_index_hill,
    EstimateReport, FluctuationLevel, IncrementSample, RegenerationRecord,
};
use ladderlab::seed::{derive_seed, rng_from_seed};
use ladderlab::walker::{write_trajectory_csv, KernelTable, StepCounts};
use ladderlab::LadderError;

use crate::output::{OutputDir, RunManifest, SCHEMA_VERSION};
use crate::{CliError, CliResult, RunConfig};


/// Shared state of one run.
pub struct Run<'a> {
    pub cfg: &'a RunConfig,
    pub out: OutputDir,
    pub manifest: RunManifest,
    pub failures: Vec<String>,
}

impl Run<'_> {
    fn check(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.failures.push(what.into());
        }
    }

    fn setup(&self, lambda: f64) -> CliResult<WalkSetup> {
        Ok(WalkSetup::new(self.cfg.p, lambda, self.cfg.steps)?)
    }

    fn batch<T: Send>(
        &mut self,
        setup: &WalkSetup,
        tag: &str,
        replicas: usize,
        f: impl Fn(&ladderlab::experiment::Replica) -> T + Sync + Send,
    ) -> CliResult<Batch<T>> {
        let b = run_batch(setup, self.cfg.seed, tag, 0, replicas, f)?;
        self.manifest.record_batch(tag, &b.seeds, b.discarded.len());
        Ok(b)
    }

    fn checkpoint_batch(&mut self, setup: &WalkSetup, tag: &str, replicas: usize) -> CliResult<CheckpointBatch> {
        let (b, discarded) = run_checkpoint_batch(setup, self.cfg.seed, tag, 0, replicas)?;
        self.manifest.record_batch(tag, &b.seeds, discarded.len());
        Ok(b)
    }

    fn regenerations(&mut self, lambda: f64, tag: &str) -> CliResult<(Vec<RegenerationRecord>, Vec<i64>)> {
        let setup = self.setup(lambda)?;
        let cutoff = self.cfg.cutoff;
        let b = self.batch(&setup, tag, self.cfg.replicas, |r| {
            (detect_regenerations(&r.trajectory, &r.config, cutoff), r.trajectory.final_vertex().x)
        })?;
        let mut recs = Vec::with_capacity(b.results.len());
        let mut xs = Vec::with_capacity(b.results.len());
        for (rec, x) in b.results {
            recs.push(rec?);
            xs.push(x);
        }
        self.note_censoring(&recs);
        Ok((recs, xs))
    }

    fn note_censoring(&mut self, recs: &[RegenerationRecord]) {
        let censored: usize = recs.iter().map(|r| r.censored_tail).sum();
        let total: usize = recs.iter().map(|r| r.count() + r.censored_tail).sum();
        if total > 0 {
            self.manifest.censoring_rate = Some(censored as f64 / total as f64);
        }
    }

    /// Mean of `X_n / n` over an independent batch, used for centring.
    fn independent_speed(&mut self, lambda: f64, tag: &str, replicas: usize) -> CliResult<EstimateReport> {
        let setup = self.setup(lambda)?;
        let b = self.batch(&setup, tag, replicas, |r| r.trajectory.final_vertex().x)?;
        Ok(direct_speed(&b.results, self.cfg.steps as u64)?)
    }
}

/// Files a subcommand writes besides its manifest.
fn planned_outputs(cfg: &RunConfig) -> Vec<String> {
    let names: &[&str] = match cfg.subcommand.as_str() {
        "sample-env" => &["env.snapshot", "env.dump", "sample-env.json"],
        "simulate" if cfg.replicas == 1 => &["simulate.csv", "simulate.json", "trajectory.csv", "simulate.env.snapshot"],
        "simulate" => &["simulate.csv", "simulate.json"],
        "speed-sweep" => &["speed-sweep.csv"],
        "clt" => &["clt.json"],
        "derivative" => &["derivative.json"],
        "trap-stats" => &["trap-stats.json"],
        "tail-index" => &["tail-index.json", "increments.csv"],
        "mz-check" => &["mz-check.json"],
        _ => &[],
    };
    names.iter().map(|s| s.to_string()).collect()
}

/// Runs one subcommand end to end. `lambda-c` prints to `stdout`; every
/// other subcommand writes files and a manifest under the output directory.
/// `overwrite` is kept out of [`RunConfig`] so a manifest never carries
/// permission to replace files.
pub fn run(cfg: &RunConfig, overwrite: bool, stdout: &mut dyn Write) -> CliResult<()> {
    if cfg.subcommand == "lambda-c" {
        return lambda_c(cfg, stdout);
    }
    let start = Instant::now();
    let lambda_c: f64 = compute_lambda_c(cfg.p)?;
    let mut run = Run {
        cfg,
        out: OutputDir::new(&cfg.out, overwrite),
        manifest: RunManifest::new(cfg, lambda_c),
        failures: Vec::new(),
    };
    let manifest_name = RunManifest::file_name(&cfg.subcommand);
    let mut names = planned_outputs(cfg);
    names.push(manifest_name.clone());
    run.out.claim(&names)?;

    let needs_walks = !matches!(cfg.subcommand.as_str(), "sample-env" | "trap-stats");
    let result = if needs_walks && cfg.replicas == 0 {
        Ok(())
    } else {
        match cfg.subcommand.as_str() {
            "sample-env" => sample_env(&mut run),
            "simulate" => simulate(&mut run),
            "speed-sweep" => speed_sweep(&mut run),
            "clt" => clt(&mut run),
            "derivative" => derivative(&mut run),
            "trap-stats" => trap_stats(&mut run),
            "tail-index" => tail_index(&mut run),
            "mz-check" => mz_check(&mut run),
            other => Err(CliError::Usage(format!("unknown subcommand {other:?}"))),
        }
    };
    // The manifest is written even when the run failed part way.
    if let Err(e) = &result {
        run.failures.push(format!("error: {e}"));
    }
    run.manifest.wall_time_s = start.elapsed().as_secs_f64();
    run.manifest.outputs = run.out.written().to_vec();
    run.manifest.outputs.push(manifest_name.clone());
    run.manifest.passed = run.failures.is_empty();
    run.manifest.failures = run.failures.clone();
    let manifest = run.manifest.clone();
    run.out.write_json(&manifest_name, &manifest)?;
    result?;
    if run.failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Assertion(run.failures))
    }
}

fn lambda_c(cfg: &RunConfig, out: &mut dyn Write) -> CliResult<()> {
    let grid: Vec<f64> = if cfg.p_given { vec![cfg.p] } else { (1..=99).map(|i| i as f64 / 100.0).collect() };
    writeln!(out, "# ladderlab lambda-c schema {SCHEMA_VERSION}")?;
    writeln!(out, "p,lambda_c,lambda_c_half")?;
    let mut values = Vec::with_capacity(grid.len());
    for &p in &grid {
        let lc: f64 = compute_lambda_c(p)?;
        writeln!(out, "{p:.6},{lc:.6},{:.6}", lc / 2.0)?;
        values.push(lc);
    }
    let mut failures = Vec::new();
    let n = values.len();
    if n > 1 {
        let asym = (0..n).map(|i| (values[i] - values[n - 1 - i]).abs()).fold(0.0, f64::max);
        if asym > 1e-12 {
            failures.push(format!("curve not symmetric about p=0.5 (max gap {asym:.1e})"));
        }
        let argmin = (0..n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
        if (grid[argmin] - 0.5).abs() > 1e-9 && grid.contains(&0.5) {
            failures.push(format!("curve minimum at p={} instead of 0.5", grid[argmin]));
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Assertion(failures))
    }
}

fn sample_env(run: &mut Run) -> CliResult<()> {
    let tm = build_transfer_matrix(run.cfg.p)?;
    let seed = derive_seed(run.cfg.seed, 0, "sample-env");
    let mut cfg = sample_cycle_stationary(&tm, run.cfg.cycles, &mut rng_from_seed(seed))?;
    cfg.seed = seed;
    let cfg = annotate(&cfg);
    run.manifest.record_batch("sample-env", &[seed], 0);
    run.out.write_with("env.snapshot", |w| Ok(write_snapshot(&cfg, w)?))?;
    run.out.write_with("env.dump", |w| Ok(write_dump(&cfg, w)?))?;
    let traps = cfg.traps();
    let mean_len = if traps.is_empty() { 0.0 } else { traps.iter().map(|t| t.length as f64).sum::<f64>() / traps.len() as f64 };
    let summary = json!({
        "seed": seed,
        "columns": cfg.n_columns(),
        "x_min": cfg.x_min(),
        "x_max": cfg.x_max(),
        "pre_regeneration_points": cfg.pre_regeneration_points().len(),
        "traps": traps.len(),
        "mean_trap_length": mean_len,
        "trap_persistence": tm.trap_persistence(),
        "stationary": tm.pi,
    });
    run.out.write_json("sample-env.json", &summary)
}

#[derive(Serialize)]
struct WalkRow {
    seed: u64,
    final_x: i64,
    final_y: u8,
    regenerations: usize,
    martingale: f64,
}

fn simulate(run: &mut Run) -> CliResult<()> {
    let lambda = run.cfg.lambda;
    let setup = run.setup(lambda)?;
    let (n, cutoff) = (run.cfg.steps, run.cfg.cutoff);
    let table = KernelTable::<f64>::new(lambda);
    let keep = run.cfg.replicas == 1;
    let b = run.batch(&setup, "simulate", run.cfg.replicas, |r| {
        let rec = detect_regenerations(&r.trajectory, &r.config, cutoff);
        let end = r.trajectory.final_vertex();
        let m = StepCounts::of(&r.trajectory, &r.config, n).martingale(&table);
        let kept = keep.then(|| (r.trajectory.clone(), r.config.clone()));
        (rec, end, m, kept, r.seed)
    })?;
    let mut rows = Vec::new();
    let mut recs = Vec::new();
    let mut kept = None;
    for (rec, end, m, k, seed) in b.results {
        let rec = rec?;
        rows.push(WalkRow { seed, final_x: end.x, final_y: end.y, regenerations: rec.count(), martingale: m });
        recs.push(rec);
        if k.is_some() {
            kept = k;
        }
    }
    run.note_censoring(&recs);
    run.out.write_with("simulate.csv", |w| {
        writeln!(w, "# ladderlab simulate schema {SCHEMA_VERSION}")?;
        writeln!(w, "seed,final_x,final_y,regenerations,martingale")?;
        for r in &rows {
            writeln!(w, "{},{},{},{},{}", r.seed, r.final_x, r.final_y, r.regenerations, r.martingale)?;
        }
        Ok(())
    })?;
    let xs: Vec<i64> = rows.iter().map(|r| r.final_x).collect();
    let mut inc = IncrementSample::default();
    for r in &recs {
        inc.push_record(r);
    }
    let summary = json!({
        "direct": direct_speed(&xs, n as u64).ok(),
        "regeneration_ratio": speed_estimate(&inc).ok(),
        "increments": inc.len(),
    });
    run.out.write_json("simulate.json", &summary)?;
    if let Some((traj, env)) = kept {
        run.out.write_with("trajectory.csv", |w| Ok(write_trajectory_csv(&traj, &env, w)?))?;
        run.out.write_with("simulate.env.snapshot", |w| Ok(write_snapshot(&env, w)?))?;
    }
    Ok(())
}

fn speed_sweep(run: &mut Run) -> CliResult<()> {
    let (p, n, replicas, seed) = (run.cfg.p, run.cfg.steps, run.cfg.replicas, run.cfg.seed);
    let mut lines = vec![
        format!("# ladderlab speed-sweep schema {SCHEMA_VERSION}"),
        "p,lambda,n,replicas,estimate,se,method,seed,discrepancy".to_string(),
    ];
    let mut outcome = Ok(());
    for &lambda in &run.cfg.lambda_grid.clone() {
        let step = (|| -> CliResult<(EstimateReport, EstimateReport)> {
            let (recs, xs) = run.regenerations(lambda, &format!("speed-sweep:{lambda}"))?;
            let mut inc = IncrementSample::default();
            for r in &recs {
                inc.push_record(r);
            }
            Ok((speed_estimate(&inc)?, direct_speed(&xs, n as u64)?))
        })();
        match step {
            Ok((ratio, direct)) => {
                let z = ratio.z_score_against(&direct);
                for e in [&ratio, &direct] {
                    lines.push(format!("{p},{lambda},{n},{replicas},{},{},{},{seed},{z}", e.estimate, e.se, e.method));
                }
                eprintln!("speed-sweep: lambda={lambda} done");
            }
            Err(e) => {
                // Keep the rows computed so far and mark the failed one.
                lines.push(format!("{p},{lambda},{n},{replicas},NaN,NaN,failed,{seed},NaN"));
                outcome = Err(e);
                break;
            }
        }
    }
    run.out.write_with("speed-sweep.csv", |w| {
        for l in &lines {
            writeln!(w, "{l}")?;
        }
        Ok(())
    })?;
    outcome
}

/// `1e3, 1e4, …` up to `steps`, with `steps` itself last.
fn decades(steps: usize) -> Vec<usize> {
    let mut t: Vec<usize> = (3..).map(|k| 10usize.pow(k)).take_while(|&t| t < steps).collect();
    t.push(steps);
    t
}

fn clt(run: &mut Run) -> CliResult<()> {
    let (lambda, n, replicas) = (run.cfg.lambda, run.cfg.steps, run.cfg.replicas);
    let lc = run.manifest.lambda_c;
    let mut setup = run.setup(lambda)?;
    if lambda < lc / 2.0 {
        setup.checkpoints = vec![n / 2, n];
        let batch = run.checkpoint_batch(&setup, "clt", replicas)?;
        let speed = run.independent_speed(lambda, "clt-speed", replicas)?;
        let report = clt_suite(&batch, speed.estimate, run.cfg.level)?;
        run.check(report.normal, format!("normality rejected at level {}", run.cfg.level));
        return run.out.write_json("clt.json", &json!({"regime": "normal", "speed": speed, "report": report}));
    }
    setup.checkpoints = decades(n);
    let first = if setup.checkpoints.len() >= 3 { 1 } else { 0 };
    if setup.checkpoints.len() - first < 2 {
        return Err(CliError::Usage("divergence check needs --steps above 1000".into()));
    }
    let batch = run.checkpoint_batch(&setup, "clt", replicas)?;
    let levels: Vec<CovarianceEstimate> = (first..batch.times.len())
        .map(|j| {
            let xs = batch.x(j);
            let mean = xs.iter().sum::<f64>() / xs.len().max(1) as f64;
            let b: Vec<f64> = xs.iter().map(|x| x - mean).collect();
            CovarianceEstimate::from_samples(&b, &batch.m(j), batch.times[j] as u64)
        })
        .collect();
    let report = variance_divergence(&levels);
    run.check(report.diverges, "variance of the centred displacement does not grow across horizons");
    run.out.write_json("clt.json", &json!({"regime": "divergent", "report": report}))
}

fn derivative(run: &mut Run) -> CliResult<()> {
    let (lambda, n, replicas) = (run.cfg.lambda, run.cfg.steps, run.cfg.replicas);
    let h = 0.05;
    if lambda < h {
        return Err(CliError::Usage(format!("--lambda must be at least {h} for the finite-difference check")));
    }
    let mut setup = run.setup(lambda)?;
    setup.checkpoints = vec![n];
    let batch = run.checkpoint_batch(&setup, "derivative", replicas)?;
    let speed = run.independent_speed(lambda, "derivative-speed", replicas)?;
    let sigma12 = derivative_via_covariance(&batch, speed.estimate)?;
    let is = importance_sampled_derivative(&batch, speed.estimate, 1.0)?;
    let mut fd = |h: f64| -> CliResult<EstimateReport> {
        let plus = run.independent_speed(lambda + h, &format!("fd+{h}"), replicas)?;
        let minus = run.independent_speed(lambda - h, &format!("fd-{h}"), replicas)?;
        Ok(finite_difference(&plus, &minus, h))
    };
    let coarse = fd(h)?;
    let fine = fd(h / 2.0)?;
    let extrapolated = richardson(&coarse, &fine);
    let z = sigma12.z_score_against(&coarse);
    run.check(z <= 3.0, format!("sigma12 and the finite difference differ by {z:.2} combined SE"));
    run.out.write_json(
        "derivative.json",
        &json!({
            "lambda": lambda,
            "speed": speed,
            "sigma12": sigma12,
            "importance_sampling": is,
            "finite_difference": coarse,
            "finite_difference_half_step": fine,
            "richardson": extrapolated,
            "z": z,
            "passes": z <= 3.0,
        }),
    )
}

fn trap_stats(run: &mut Run) -> CliResult<()> {
    let (p, lambda) = (run.cfg.p, run.cfg.lambda);
    let kappa = run.cfg.exponent.unwrap_or(2.0);
    if lambda <= 0.0 {
        return Err(CliError::Usage("--lambda must be positive for trap statistics".into()));
    }
    let mut rng = rng_from_seed(derive_seed(run.cfg.seed, 0, "trap-stats"));
    let mut rows = Vec::new();
    for m in 1..=10u32 {
        let spec = TrapChainSpec::new(m, lambda)?;
        let formula: f64 = expected_trap_return_time(lambda, m)?;
        let exact = trap_return_time_exact(spec)?;
        let rel = (formula - exact).abs() / exact;
        run.check(rel <= 1e-10, format!("m={m}: closed-form return time {formula} vs linear solve {exact}"));
        let (lo, hi) = trap_moment_bounds(lambda, m, kappa)?;
        // Monte Carlo only where an excursion is short enough to simulate.
        let mc = if formula <= 1e3 {
            let (mean, se) = trap_return_moment_mc(spec, kappa, 20_000, &mut rng);
            run.check(lo <= mean + 3.0 * se && mean - 3.0 * se <= hi, format!("m={m}: moment {mean} outside [{lo}, {hi}]"));
            Some(json!({"mean": mean, "se": se}))
        } else {
            None
        };
        let pmf: f64 = trap_length_pmf(p, m)?;
        rows.push(json!({
            "m": m,
            "length_pmf": pmf,
            "return_time": formula,
            "return_time_exact": exact,
            "moment_lower": lo,
            "moment_upper": hi,
            "moment_mc": mc,
        }));
    }
    let sojourns = if run.cfg.replicas > 0 {
        let setup = run.setup(lambda)?;
        let cutoff = run.cfg.cutoff;
        let b = run.batch(&setup, "trap-stats", run.cfg.replicas, |r| trap_sojourn_times(&r.trajectory, &r.config, cutoff))?;
        match trap_sojourn_moments(&b.results.concat(), kappa) {
            Ok(r) => json!(r),
            Err(LadderError::InsufficientSample { needed, got }) => json!({"insufficient": {"needed": needed, "got": got}}),
            Err(e) => return Err(e.into()),
        }
    } else {
        serde_json::Value::Null
    };
    let lc = run.manifest.lambda_c;
    run.out.write_json(
        "trap-stats.json",
        &json!({
            "lambda": lambda,
            "kappa": kappa,
            "tail_exponent": lc / lambda,
            "moment_expected_finite": kappa < lc / lambda,
            "lengths": rows,
            "sojourns": sojourns,
        }),
    )
}

fn tail_index(run: &mut Run) -> CliResult<()> {
    let lambda = run.cfg.lambda;
    if lambda <= 0.0 {
        return Err(CliError::Usage("--lambda must be positive for the tail index".into()));
    }
    let (recs, _) = run.regenerations(lambda, "tail-index")?;
    let mut inc = IncrementSample::default();
    for r in &recs {
        inc.push_record(r);
    }
    run.out.write_with("increments.csv", |w| Ok(inc.write_csv(w)?))?;
    let tau = inc.tau_f64();
    let k = run.cfg.hill_k.unwrap_or_else(|| default_hill_k(tau.len()));
    let hill = tail_index_hill(&tau, k)?;
    let target = run.manifest.lambda_c / lambda;
    let within = (hill.estimate - target).abs() <= 0.25 * target;
    run.check(within, format!("Hill estimate {:.3} not within 25% of {target:.3}", hill.estimate));
    run.out.write_json("tail-index.json", &json!({"hill": hill, "target": target, "increments": tau.len(), "passes": within}))
}

fn mz_check(run: &mut Run) -> CliResult<()> {
    let (lambda, n, replicas) = (run.cfg.lambda, run.cfg.steps, run.cfg.replicas);
    let r = run.cfg.exponent.unwrap_or(1.5);
    let times = decades(n);
    if times.len() < 2 {
        return Err(CliError::Usage("fluctuation check needs --steps above 1000".into()));
    }
    let mut setup = run.setup(lambda)?;
    setup.checkpoints = times.clone();
    let main = run.checkpoint_batch(&setup, "mz", replicas)?;
    let aux = run.checkpoint_batch(&setup, "mz-center", (replicas / 2).max(2))?;
    let levels: Vec<FluctuationLevel> = (0..times.len())
        .map(|j| {
            let xs = aux.x(j);
            FluctuationLevel {
                n: times[j] as u64,
                x: main.x(j),
                m: main.m(j),
                center: Some(xs.iter().sum::<f64>() / xs.len().max(1) as f64),
            }
        })
        .collect();
    let report = mz_fluctuation_check(&levels, r, 0.0)?;
    let limit = if lambda > 0.0 { (run.manifest.lambda_c / lambda).min(2.0) } else { 2.0 };
    let expected = r < limit;
    run.check(
        report.decays == expected,
        format!("scaled fluctuations decay={} but r={r} vs min(lambda_c/lambda, 2)={limit:.3}", report.decays),
    );
    run.out.write_json("mz-check.json", &json!({"r": r, "threshold": limit, "expected_decay": expected, "report": report}))
}
