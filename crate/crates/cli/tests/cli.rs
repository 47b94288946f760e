use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ladderlab::environment::read_snapshot;
use serde_json::Value;

fn ladderlab(args: &[&str], out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ladderlab"));
    cmd.args(args).env_remove("LADDERLAB_OUT_DIR");
    if let Some(dir) = out {
        cmd.arg("--out").arg(dir);
    }
    cmd.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn lambda_c_curve_is_symmetric_with_its_minimum_at_one_half() {
    let o = ladderlab(&["lambda-c"], None);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# ladderlab lambda-c schema"));
    assert_eq!(lines.next().unwrap(), "p,lambda_c,lambda_c_half");
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|f| f.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 99);
    for (a, b) in rows.iter().zip(rows.iter().rev()) {
        assert_eq!(a[1], b[1]);
        assert!((a[2] - a[1] / 2.0).abs() <= 1e-6, "both columns are rounded to 6 decimals");
    }
    let min = rows.iter().min_by(|a, b| a[1].total_cmp(&b[1])).unwrap();
    assert_eq!(min[0], 0.5);

    let single = ladderlab(&["lambda-c", "--p", "0.5"], None);
    let text = String::from_utf8(single.stdout).unwrap();
    // ½·ln(3+√5) = 0.82778541…
    assert_eq!(text.lines().nth(2).unwrap(), "0.500000,0.827785,0.413893");
}

#[test]
fn domain_and_usage_errors_exit_with_two() {
    assert_eq!(code(&ladderlab(&["lambda-c", "--p", "1.5"], None)), 2);
    assert_eq!(code(&ladderlab(&["simulate", "--cutoff", "0"], None)), 2);
    assert_eq!(code(&ladderlab(&["simulate", "--lambda", "-1"], None)), 2);
    assert_eq!(code(&ladderlab(&["speed-sweep", "--lambda-grid", "0.5:0.1:0.1"], None)), 2);
    assert_eq!(code(&ladderlab(&["no-such-command"], None)), 2);
}

#[test]
fn speed_sweep_is_byte_reproducible_and_reruns_from_its_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    let args = ["speed-sweep", "--lambda-grid", "0.3,0.6", "--steps", "2000", "--replicas", "20", "--seed", "9"];
    assert_eq!(code(&ladderlab(&args, Some(&a))), 0);
    assert_eq!(code(&ladderlab(&args, Some(&b))), 0);
    let csv = fs::read(a.join("speed-sweep.csv")).unwrap();
    assert_eq!(csv, fs::read(b.join("speed-sweep.csv")).unwrap());

    let text = String::from_utf8(csv.clone()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# ladderlab speed-sweep schema"));
    assert_eq!(lines[1], "p,lambda,n,replicas,estimate,se,method,seed,discrepancy");
    assert_eq!(lines.len(), 2 + 4);
    assert!(lines[2..].iter().all(|l| l.split(',').count() == 9 && l.contains(",9,")));

    let manifest = json(&a.join("speed-sweep.manifest.json"));
    assert_eq!(manifest["master_seed"], 9);
    assert_eq!(manifest["seeds"].as_array().unwrap().len(), 2);
    assert!(manifest["lambda_c"].as_f64().unwrap() > 0.8);

    let m = a.join("speed-sweep.manifest.json");
    let rerun = ladderlab(&["speed-sweep", "--config", m.to_str().unwrap()], Some(&c));
    assert_eq!(code(&rerun), 0, "{}", String::from_utf8_lossy(&rerun.stderr));
    assert_eq!(csv, fs::read(c.join("speed-sweep.csv")).unwrap());
}

#[test]
fn zero_replicas_write_the_manifest_only() {
    let dir = tempfile::tempdir().unwrap();
    let o = ladderlab(&["speed-sweep", "--replicas", "0"], Some(dir.path()));
    assert_eq!(code(&o), 0);
    let names: Vec<String> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    assert_eq!(names, vec!["speed-sweep.manifest.json".to_string()]);
    assert_eq!(json(&dir.path().join("speed-sweep.manifest.json"))["replicas_run"], 0);
}

#[test]
fn existing_outputs_are_not_replaced_without_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["sample-env", "--cycles", "5", "--seed", "4"];
    assert_eq!(code(&ladderlab(&args, Some(dir.path()))), 0);
    let snap = dir.path().join("env.snapshot");
    fs::write(&snap, b"sentinel").unwrap();
    assert_eq!(code(&ladderlab(&args, Some(dir.path()))), 2);
    assert_eq!(fs::read(&snap).unwrap(), b"sentinel");

    let mut over = args.to_vec();
    over.push("--overwrite");
    assert_eq!(code(&ladderlab(&over, Some(dir.path()))), 0);
    let cfg = read_snapshot(fs::File::open(&snap).unwrap()).unwrap();
    assert!(cfg.validate().is_ok());
    assert!(cfg.is_pre_regeneration(0));
}

#[test]
fn config_file_is_overridden_by_flags_and_unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    fs::write(&conf, "# sweep\np = 0.6\nsteps = 300\nreplicas = 3\nseed = 5\n").unwrap();
    let out = dir.path().join("out");
    let o = ladderlab(&["simulate", "--config", conf.to_str().unwrap(), "--steps", "400"], Some(&out));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = json(&out.join("simulate.manifest.json"));
    assert_eq!(m["config"]["p"], 0.6);
    assert_eq!(m["config"]["steps"], 400);
    assert_eq!(m["config"]["replicas"], 3);
    assert_eq!(m["seeds"][0][1].as_array().unwrap().len(), 3);

    fs::write(&conf, "walkers = 3\n").unwrap();
    assert_eq!(code(&ladderlab(&["simulate", "--config", conf.to_str().unwrap()], Some(&out))), 2);
}

#[test]
fn output_directory_defaults_to_the_environment_variable() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_ladderlab"))
        .args(["sample-env", "--cycles", "3"])
        .env("LADDERLAB_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(dir.path().join("sample-env.manifest.json").exists());
}

#[test]
fn single_replica_simulation_saves_its_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let o = ladderlab(&["simulate", "--replicas", "1", "--steps", "800", "--lambda", "0.4"], Some(dir.path()));
    assert_eq!(code(&o), 0);
    let traj = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let last: Vec<&str> = traj.lines().last().unwrap().split(',').collect();
    assert_eq!(last[0], "800");
    let summary = fs::read_to_string(dir.path().join("simulate.csv")).unwrap();
    let row: Vec<&str> = summary.lines().nth(2).unwrap().split(',').collect();
    assert_eq!(row[1], last[1]);
    // The walk's own environment is saved next to it.
    let env = read_snapshot(fs::File::open(dir.path().join("simulate.env.snapshot")).unwrap()).unwrap();
    assert!(env.contains_column(last[1].parse().unwrap()));
}

#[test]
fn budget_shortfalls_exit_with_three_and_leave_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = ladderlab(&["clt", "--lambda", "0.3", "--replicas", "10", "--steps", "1000"], Some(dir.path()));
    assert_eq!(code(&o), 3);
    let m = json(&dir.path().join("clt.manifest.json"));
    assert_eq!(m["passed"], false);
    assert!(m["failures"][0].as_str().unwrap().contains("insufficient sample"));
}

#[test]
fn trap_statistics_match_the_exact_chain() {
    let dir = tempfile::tempdir().unwrap();
    let o = ladderlab(&["trap-stats", "--lambda", "0.3", "--replicas", "20", "--steps", "20000"], Some(dir.path()));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&dir.path().join("trap-stats.json"));
    let rows = r["lengths"].as_array().unwrap();
    assert_eq!(rows.len(), 10);
    for row in rows {
        let (a, b) = (row["return_time"].as_f64().unwrap(), row["return_time_exact"].as_f64().unwrap());
        assert!((a - b).abs() <= 1e-10 * b);
    }
    assert_eq!(r["moment_expected_finite"], true);
}

#[test]
fn derivative_at_small_bias_agrees_with_finite_differences() {
    let dir = tempfile::tempdir().unwrap();
    let o = ladderlab(&["derivative", "--lambda", "0.3", "--replicas", "2000", "--steps", "20000"], Some(dir.path()));
    let r = json(&dir.path().join("derivative.json"));
    assert_eq!(code(&o), 0, "{r}");
    assert!(r["sigma12"]["estimate"].as_f64().unwrap() > 0.0);
    assert!(r["z"].as_f64().unwrap() <= 3.0);
    assert!(r["richardson"]["se"].as_f64().unwrap() > 0.0);
}

#[test]
fn clt_divergence_is_flagged_above_half_the_critical_bias() {
    let dir = tempfile::tempdir().unwrap();
    let o = ladderlab(&["clt", "--lambda", "0.7", "--replicas", "1000", "--steps", "100000"], Some(dir.path()));
    let r = json(&dir.path().join("clt.json"));
    assert_eq!(code(&o), 0, "{r}");
    assert_eq!(r["regime"], "divergent");
    assert_eq!(r["report"]["diverges"], true);
}

#[test]
fn tail_index_at_large_bias_is_near_the_ratio_of_biases() {
    let dir = tempfile::tempdir().unwrap();
    let o = ladderlab(&["tail-index", "--lambda", "0.7", "--replicas", "200", "--steps", "100000"], Some(dir.path()));
    let r = json(&dir.path().join("tail-index.json"));
    assert_eq!(code(&o), 0, "{r}");
    let target = r["target"].as_f64().unwrap();
    assert!((target - 0.827785 / 0.7).abs() < 1e-5);
    assert!((r["hill"]["estimate"].as_f64().unwrap() - target).abs() <= 0.25 * target);
}

#[test]
fn fluctuations_decay_below_the_critical_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let o = ladderlab(
        &["mz-check", "--lambda", "0.6", "--exponent", "1.2", "--replicas", "1000", "--steps", "100000"],
        Some(dir.path()),
    );
    let r = json(&dir.path().join("mz-check.json"));
    assert_eq!(code(&o), 0, "{r}");
    assert_eq!(r["expected_decay"], true);
}
