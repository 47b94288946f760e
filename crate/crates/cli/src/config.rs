//! Run configuration: defaults, then a `key=value` file, then flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Environment variable naming the default output directory.
pub const OUT_DIR_VAR: &str = "LADDERLAB_OUT_DIR";

/// Flags shared by every subcommand. Unset flags fall back to the config
/// file and then to the defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Edge density in (0,1)
    #[arg(long, global = true)]
    pub p: Option<f64>,
    /// Bias λ >= 0
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    /// Comma-separated biases, or start:stop:step
    #[arg(long = "lambda-grid", global = true)]
    pub lambda_grid: Option<String>,
    /// Walk length
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    /// Number of independent replicas (0: manifest only)
    #[arg(long, global = true)]
    pub replicas: Option<usize>,
    /// Regeneration finalization distance in columns
    #[arg(long, global = true)]
    pub cutoff: Option<i64>,
    /// Cycles of the sampled environment window
    #[arg(long, global = true)]
    pub cycles: Option<usize>,
    /// Master seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Order statistics used by the Hill estimator
    #[arg(long = "hill-k", global = true)]
    pub hill_k: Option<usize>,
    /// Significance level of hypothesis tests
    #[arg(long, global = true)]
    pub level: Option<f64>,
    /// Moment or scaling exponent (trap-stats, mz-check)
    #[arg(long, global = true)]
    pub exponent: Option<f64>,
    /// Replace existing output files
    #[arg(long, global = true)]
    pub overwrite: bool,
    /// key=value file, or a manifest written by an earlier run
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

/// Fully resolved and validated parameters of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub subcommand: String,
    pub p: f64,
    /// Whether `p` was set explicitly rather than defaulted.
    #[serde(default)]
    pub p_given: bool,
    pub lambda: f64,
    pub lambda_grid: Vec<f64>,
    pub steps: usize,
    pub replicas: usize,
    pub cutoff: i64,
    pub cycles: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub hill_k: Option<usize>,
    pub level: f64,
    pub exponent: Option<f64>,
}

/// Default grids keep this distance from `λ_c/2` and `λ_c`, where the
/// finite-n behaviour of either regime is blurred.
pub const GRID_MARGIN: f64 = 0.05;

const KEYS: [&str; 12] =
    ["p", "lambda", "lambda-grid", "steps", "replicas", "cutoff", "cycles", "seed", "out", "hill-k", "level", "exponent"];

/// Parses `key=value` lines; `#` starts a comment.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected key=value, got {raw:?}", i + 1)))?;
        let k = k.trim().replace('_', "-");
        if !KEYS.contains(&k.as_str()) {
            return Err(CliError::Usage(format!("config line {}: unknown key {k:?}", i + 1)));
        }
        map.insert(k, v.trim().to_string());
    }
    Ok(map)
}

/// Reads a config file. A file starting with `{` is taken to be a run
/// manifest and its `config` object is used.
pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    if !text.trim_start().starts_with('{') {
        return parse_kv(&text);
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let cfg: RunConfig = serde_json::from_value(manifest["config"].clone())
        .map_err(|e| CliError::Usage(format!("{}: no usable config in manifest: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    map.insert("p".into(), cfg.p.to_string());
    map.insert("lambda".into(), cfg.lambda.to_string());
    let grid: Vec<String> = cfg.lambda_grid.iter().map(f64::to_string).collect();
    map.insert("lambda-grid".into(), grid.join(","));
    map.insert("steps".into(), cfg.steps.to_string());
    map.insert("replicas".into(), cfg.replicas.to_string());
    map.insert("cutoff".into(), cfg.cutoff.to_string());
    map.insert("cycles".into(), cfg.cycles.to_string());
    map.insert("seed".into(), cfg.seed.to_string());
    map.insert("out".into(), cfg.out.display().to_string());
    map.insert("level".into(), cfg.level.to_string());
    if let Some(k) = cfg.hill_k {
        map.insert("hill-k".into(), k.to_string());
    }
    if let Some(e) = cfg.exponent {
        map.insert("exponent".into(), e.to_string());
    }
    Ok(map)
}

/// `a,b,c` or `start:stop:step` (inclusive of `stop` up to rounding).
pub fn parse_grid(s: &str) -> Result<Vec<f64>, CliError> {
    let bad = |what: &str| CliError::Usage(format!("bad lambda grid {s:?}: {what}"));
    if let Some((a, rest)) = s.split_once(':') {
        let (b, h) = rest.split_once(':').ok_or_else(|| bad("expected start:stop:step"))?;
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad("not a number"));
        let (a, b, h) = (num(a)?, num(b)?, num(h)?);
        if h.is_nan() || h <= 0.0 || b < a {
            return Err(bad("need step > 0 and stop >= start"));
        }
        let count = ((b - a) / h + 1e-9).floor() as usize;
        return Ok((0..=count).map(|i| a + i as f64 * h).collect());
    }
    s.split(',').map(|t| t.trim().parse::<f64>().map_err(|_| bad("not a number"))).collect()
}

fn pick<T: std::str::FromStr>(flag: Option<T>, file: &BTreeMap<String, String>, key: &str, default: T) -> Result<T, CliError> {
    if let Some(v) = flag {
        return Ok(v);
    }
    match file.get(key) {
        Some(s) => s.parse().map_err(|_| CliError::Usage(format!("config key {key}: cannot parse {s:?}"))),
        None => Ok(default),
    }
}

/// Per-subcommand defaults: (λ, steps, replicas).
fn defaults(sub: &str) -> (f64, usize, usize) {
    match sub {
        "speed-sweep" => (0.3, 100_000, 200),
        "clt" => (0.3, 100_000, 1_000),
        "derivative" => (0.3, 100_000, 2_000),
        "tail-index" => (0.7, 1_000_000, 100),
        "mz-check" => (0.6, 100_000, 1_000),
        "trap-stats" => (0.3, 100_000, 200),
        _ => (0.5, 10_000, 1),
    }
}

impl RunConfig {
    pub fn resolve(sub: &str, flags: &Flags) -> Result<Self, CliError> {
        let file = match &flags.config {
            Some(path) => read_config_file(path)?,
            None => BTreeMap::new(),
        };
        let (lambda0, steps0, replicas0) = defaults(sub);
        let grid = match (&flags.lambda_grid, file.get("lambda-grid")) {
            (Some(s), _) => parse_grid(s)?,
            (None, Some(s)) if !s.is_empty() => parse_grid(s)?,
            _ => Vec::new(),
        };
        let out = match (&flags.out, file.get("out")) {
            (Some(p), _) => p.clone(),
            (None, Some(s)) => PathBuf::from(s),
            _ => std::env::var_os(OUT_DIR_VAR).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("ladderlab-out")),
        };
        let opt = |flag: Option<String>, key: &str| flag.or_else(|| file.get(key).cloned());
        let hill_k = opt(flags.hill_k.map(|k| k.to_string()), "hill-k")
            .map(|s| s.parse::<usize>().map_err(|_| CliError::Usage(format!("hill-k: cannot parse {s:?}"))))
            .transpose()?;
        let exponent = opt(flags.exponent.map(|k| k.to_string()), "exponent")
            .map(|s| s.parse::<f64>().map_err(|_| CliError::Usage(format!("exponent: cannot parse {s:?}"))))
            .transpose()?;
        let mut cfg = Self {
            subcommand: sub.to_string(),
            p: pick(flags.p, &file, "p", 0.5)?,
            p_given: flags.p.is_some() || file.contains_key("p"),
            lambda: pick(flags.lambda, &file, "lambda", lambda0)?,
            lambda_grid: grid,
            steps: pick(flags.steps, &file, "steps", steps0)?,
            replicas: pick(flags.replicas, &file, "replicas", replicas0)?,
            cutoff: pick(flags.cutoff, &file, "cutoff", ladderlab::regeneration::DEFAULT_CUTOFF)?,
            cycles: pick(flags.cycles, &file, "cycles", 100)?,
            seed: pick(flags.seed, &file, "seed", 1)?,
            out,
            hill_k,
            level: pick(flags.level, &file, "level", 0.01)?,
            exponent,
        };
        cfg.validate()?;
        let lc: f64 = ladderlab::analysis::formulas::compute_lambda_c(cfg.p)?;
        let clear = |l: &f64| (l - lc / 2.0).abs() >= GRID_MARGIN && (l - lc).abs() >= GRID_MARGIN;
        if cfg.lambda_grid.is_empty() {
            cfg.lambda_grid = (1..=12).map(|i| i as f64 / 10.0).filter(clear).collect();
        } else if let Some(l) = cfg.lambda_grid.iter().find(|l| !clear(l)) {
            eprintln!("warning: lambda={l} lies within {GRID_MARGIN} of lambda_c/2 or lambda_c = {lc:.4}");
        }
        Ok(cfg)
    }

    /// Range checks, all done before any work starts.
    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |m: String| Err(CliError::Usage(m));
        if !(self.p > 0.0 && self.p < 1.0) {
            return fail(format!("--p must lie in (0,1), got {}", self.p));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return fail(format!("--lambda must be finite and >= 0, got {}", self.lambda));
        }
        if self.lambda_grid.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return fail("--lambda-grid needs finite values >= 0".into());
        }
        if self.steps == 0 {
            return fail("--steps must be >= 1".into());
        }
        if self.cutoff < 1 {
            return fail(format!("--cutoff must be >= 1, got {}", self.cutoff));
        }
        if self.cycles == 0 {
            return fail("--cycles must be >= 1".into());
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return fail(format!("--level must lie in (0,1), got {}", self.level));
        }
        if self.hill_k == Some(0) {
            return fail("--hill-k must be >= 1".into());
        }
        if let Some(e) = self.exponent {
            if !(e > 0.0 && e.is_finite()) {
                return fail(format!("--exponent must be positive, got {e}"));
            }
        }
        Ok(())
    }
}
