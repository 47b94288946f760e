//! Output directory handling and run manifests.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{CliError, CliResult, RunConfig};

/// Version tag written into every CSV header and manifest.
pub const SCHEMA_VERSION: u32 = 1;

/// Output directory that refuses to replace existing files unless
/// `overwrite` is set. All names a run will write are claimed up front so a
/// collision is reported before any work is done.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    overwrite: bool,
    written: Vec<String>,
}

impl OutputDir {
    pub fn new(root: &Path, overwrite: bool) -> Self {
        Self { root: root.to_path_buf(), overwrite, written: Vec::new() }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Fails with a usage error if any of `names` already exists.
    pub fn claim(&self, names: &[String]) -> CliResult<()> {
        if self.overwrite {
            return Ok(());
        }
        for name in names {
            let p = self.path(name);
            if p.exists() {
                return Err(CliError::Usage(format!("{} exists; pass --overwrite to replace it", p.display())));
            }
        }
        Ok(())
    }

    /// Writes `name` through `f`, creating the directory if needed.
    pub fn write_with(&mut self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> CliResult<()>) -> CliResult<()> {
        self.claim(&[name.to_string()])?;
        fs::create_dir_all(&self.root)?;
        let mut w = BufWriter::new(File::create(self.path(name))?);
        f(&mut w)?;
        w.flush()?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        self.write_with(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)?;
            Ok(())
        })
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }
}

/// Record of one run. Together with the binary version, `config` and
/// `seeds` reproduce every output byte for byte.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: u32,
    pub version: String,
    pub config: RunConfig,
    pub lambda_c: f64,
    pub master_seed: u64,
    /// Per-replica seeds, grouped by batch tag.
    pub seeds: Vec<(String, Vec<u64>)>,
    pub replicas_run: usize,
    pub discarded: usize,
    pub discard_rate: f64,
    /// Fraction of regeneration intervals cut off at the end of the walk.
    pub censoring_rate: Option<f64>,
    pub wall_time_s: f64,
    pub outputs: Vec<String>,
    pub passed: bool,
    pub failures: Vec<String>,
}

impl RunManifest {
    pub fn new(config: &RunConfig, lambda_c: f64) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            lambda_c,
            master_seed: config.seed,
            seeds: Vec::new(),
            replicas_run: 0,
            discarded: 0,
            discard_rate: 0.0,
            censoring_rate: None,
            wall_time_s: 0.0,
            outputs: Vec::new(),
            passed: true,
            failures: Vec::new(),
        }
    }

    /// Books a finished batch.
    pub fn record_batch(&mut self, tag: &str, seeds: &[u64], discarded: usize) {
        self.seeds.push((tag.to_string(), seeds.to_vec()));
        self.replicas_run += seeds.len() + discarded;
        self.discarded += discarded;
        self.discard_rate =
            if self.replicas_run == 0 { 0.0 } else { self.discarded as f64 / self.replicas_run as f64 };
    }

    pub fn file_name(subcommand: &str) -> String {
        format!("{subcommand}.manifest.json")
    }
}
