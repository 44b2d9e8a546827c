//! End-to-end runs of the `bpinn` binary on small problems.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

/// Small training problem on a one-day synthetic series.
const SMALL: &[&str] = &[
    "--set", "train.hidden=[8, 8]",
    "--set", "train.n0=5",
    "--set", "train.nb=200",
    "--set", "train.nr=300",
    "--set", "data.days=1",
    "--set", "uq.samples=16",
    "--set", "thermal.samples=40",
];

fn bpinn(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bpinn"))
        .args(args)
        .arg("--output")
        .arg(out)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) {
    let o = bpinn(out, args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
}

fn with_small<'a>(args: &[&'a str]) -> Vec<&'a str> {
    let mut v = args.to_vec();
    v.extend_from_slice(SMALL);
    v
}

fn read(p: impl AsRef<Path>) -> String {
    fs::read_to_string(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn help_and_usage_errors() {
    let dir = TempDir::new().unwrap();
    assert_eq!(bpinn(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(bpinn(dir.path(), &["--version"]).status.code(), Some(0));
    assert_eq!(bpinn(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(bpinn(dir.path(), &["train", "--set", "noequals"]).status.code(), Some(1));
    assert_eq!(bpinn(dir.path(), &["train", "--set", "train.learning_rate=1"]).status.code(), Some(4));
    assert_eq!(bpinn(dir.path(), &["train", "--variant", "bnn"]).status.code(), Some(4));
}

#[test]
fn missing_input_exits_2_and_names_the_path() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("absent.csv");
    let o = bpinn(dir.path(), &["solve-ref", "--input", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("absent.csv"));
}

#[test]
fn solve_ref_four_days_is_replayable() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    ok(a.path(), &["solve-ref", "--seed", "3"]);
    ok(b.path(), &["solve-ref", "--seed", "3"]);
    let truth = read(a.path().join("truth.csv"));
    // 5760 minute samples span 5759 minutes: one row per sample
    assert_eq!(truth.lines().count(), 1 + 5760);
    assert_eq!(truth.lines().next().unwrap().split(',').count(), 1 + 201);
    assert_eq!(truth, read(b.path().join("truth.csv")));
    assert!(read(a.path().join("truth.svg")).starts_with("<svg"));
    assert!(a.path().join("solve-ref.config.toml").exists());
}

#[test]
fn solve_ref_reads_synthesized_series() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["synth-data", "--days", "1", "--seed", "5"]);
    let series = dir.path().join("series.csv");
    assert_eq!(read(&series).lines().count(), 1 + 1440);
    let from_file = TempDir::new().unwrap();
    ok(from_file.path(), &["solve-ref", "--input", series.to_str().unwrap()]);
    let direct = TempDir::new().unwrap();
    ok(direct.path(), &["solve-ref", "--seed", "5", "--set", "data.days=1"]);
    let (f, d) = (read(from_file.path().join("truth.csv")), read(direct.path().join("truth.csv")));
    assert_eq!(f.lines().count(), d.lines().count());
    let (fr, dr) = (csv_rows(&f), csv_rows(&d));
    let max_gap = fr
        .iter()
        .zip(&dr)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x.parse::<f64>().unwrap() - y.parse::<f64>().unwrap()).abs()))
        .fold(0.0, f64::max);
    // the CSV round trip is lossless
    assert_eq!(max_gap, 0.0);
}

#[test]
fn train_smoke_run_and_replay() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let args = with_small(&["train", "--variant", "bpinn-hetero", "--epochs", "50"]);
    ok(a.path(), &args);
    ok(b.path(), &args);
    let log = read(a.path().join("train_log.csv"));
    assert_eq!(log.lines().next().unwrap(), "epoch,kl,nll_0,nll_bc,nll_r,total,val,ms");
    assert_eq!(log.lines().count(), 1 + 50);
    for f in ["model.ckpt", "train_log.csv", "train_summary.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let summary: serde_json::Value = serde_json::from_str(&read(a.path().join("train_summary.json"))).unwrap();
    assert_eq!(summary["schedule"], "adam");
    assert_eq!(summary["variant"], "bpinn_hetero");

    let c = TempDir::new().unwrap();
    let mut other = args.clone();
    other.extend(["--seed", "1"]);
    ok(c.path(), &other);
    assert_ne!(read(a.path().join("model.ckpt")), read(c.path().join("model.ckpt")));
}

#[test]
fn pinn_records_adam_then_lbfgs() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &with_small(&["train", "--variant", "pinn", "--epochs", "10", "--set", "train.lbfgs_iters=15"]));
    let summary: serde_json::Value = serde_json::from_str(&read(dir.path().join("train_summary.json"))).unwrap();
    assert_eq!(summary["schedule"], "adam+lbfgs");
    assert_eq!(summary["adam_epochs"], 10);
    let lbfgs = summary["lbfgs_iters"].as_u64().unwrap();
    assert!((1..=15).contains(&lbfgs));
    let rows = csv_rows(&read(dir.path().join("train_log.csv")));
    assert_eq!(rows.len() as u64, 10 + lbfgs);
    let epochs: Vec<u64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert!(epochs.windows(2).all(|w| w[1] == w[0] + 1));
}

#[test]
fn divergence_exits_3_with_checkpoint() {
    let dir = TempDir::new().unwrap();
    let o = bpinn(dir.path(), &with_small(&["train", "--variant", "pinn", "--epochs", "30", "--set", "train.lr=1e6"]));
    assert_eq!(o.status.code(), Some(3));
    assert!(dir.path().join("model.ckpt").exists());
    let summary: serde_json::Value = serde_json::from_str(&read(dir.path().join("train_summary.json"))).unwrap();
    assert_eq!(summary["stop"], "divergence");
}

#[test]
fn config_snapshot_reproduces_the_run() {
    let a = TempDir::new().unwrap();
    ok(a.path(), &with_small(&["train", "--variant", "dpinn-homo", "--epochs", "8", "--seed", "4"]));
    let snap = a.path().join("train.config.toml");
    let b = TempDir::new().unwrap();
    ok(b.path(), &["train", "--config", snap.to_str().unwrap()]);
    assert_eq!(read(a.path().join("model.ckpt")), read(b.path().join("model.ckpt")));
    assert_eq!(read(a.path().join("train_log.csv")), read(b.path().join("train_log.csv")));
}

/// Trains a four-day model and writes the default reference grid next to it.
fn four_day(variant: &str, dir: &Path) {
    let mut args = vec!["train", "--variant", variant, "--epochs", "20", "--set", "train.lbfgs_iters=5"];
    args.extend_from_slice(SMALL);
    args.extend(["--set", "data.days=4"]);
    ok(dir, &args);
    ok(dir, &["solve-ref", "--set", "refsolver.nx=51"]);
}

#[test]
fn evaluate_reports_six_instants() {
    let dir = TempDir::new().unwrap();
    four_day("bpinn-homo", dir.path());
    ok(dir.path(), &["evaluate", "--instants", "0,3,6,18,25,50", "--set", "uq.samples=8"]);
    let rows = csv_rows(&read(dir.path().join("eval_instants.csv")));
    assert_eq!(rows.len(), 6);
    let hours: Vec<f64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(hours, vec![0.0, 3.0, 6.0, 18.0, 25.0, 50.0]);
    for r in &rows {
        let t: f64 = r[1].parse().unwrap();
        let h: f64 = r[0].parse().unwrap();
        // nearest strided node lies within half a stride (30 min)
        assert!((t - 3600.0 * h).abs() <= 900.0, "{t} vs {h} h");
        assert!(r[4].parse::<f64>().unwrap() > 0.0);
    }
    let report: serde_json::Value = serde_json::from_str(&read(dir.path().join("eval.json"))).unwrap();
    assert!(report["crps_mean"].as_f64().unwrap() > 0.0);
    assert!(report["miscalibration_area"].as_f64().is_some());

    let a = fs::read(dir.path().join("eval.json")).unwrap();
    ok(dir.path(), &["evaluate", "--instants", "0,3,6,18,25,50", "--set", "uq.samples=8"]);
    assert_eq!(a, fs::read(dir.path().join("eval.json")).unwrap());
}

#[test]
fn pinn_evaluation_has_no_probabilistic_scores() {
    let dir = TempDir::new().unwrap();
    four_day("pinn", dir.path());
    ok(dir.path(), &["evaluate"]);
    let report: serde_json::Value = serde_json::from_str(&read(dir.path().join("eval.json"))).unwrap();
    assert!(report["rmse"].as_f64().unwrap() > 0.0);
    assert!(report["crps_mean"].is_null());
    assert!(report["nll_mean"].is_null());
    for r in csv_rows(&read(dir.path().join("eval_instants.csv"))) {
        assert!(r[4].is_empty() && r[5].is_empty());
        assert!(r[3].parse::<f64>().is_ok());
    }
}

#[test]
fn evaluate_rejects_truth_outside_the_model_span() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &with_small(&["train", "--variant", "pinn", "--epochs", "2", "--set", "train.lbfgs_iters=0"]));
    // default series is four days, the model covers one
    ok(dir.path(), &["solve-ref", "--set", "refsolver.nx=21"]);
    let o = bpinn(dir.path(), &["evaluate"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("outside"));
}

fn grid(text: &str) -> Vec<Vec<f64>> {
    csv_rows(text).into_iter().map(|r| r.into_iter().skip(1).map(|v| v.parse().unwrap()).collect()).collect()
}

#[test]
fn age_outputs_are_consistent() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &with_small(&["train", "--variant", "pinn", "--epochs", "5", "--set", "train.lbfgs_iters=0"]));
    ok(dir.path(), &with_small(&["age"]));
    let v_std = grid(&read(dir.path().join("v_std.csv")));
    let lol_std = grid(&read(dir.path().join("lol_std.csv")));
    assert!(v_std.iter().chain(&lol_std).flatten().all(|&v| v == 0.0));

    ok(dir.path(), &with_small(&["train", "--variant", "bpinn-hetero", "--epochs", "5"]));
    ok(dir.path(), &with_small(&["age"]));
    let lol = grid(&read(dir.path().join("lol_mean.csv")));
    assert_eq!(lol.len(), 1440 / 10);
    for w in lol.windows(2) {
        assert!(w[0].iter().zip(&w[1]).all(|(a, b)| b >= a));
    }
    assert!(grid(&read(dir.path().join("v_std.csv"))).iter().flatten().any(|&v| v > 0.0));
    for f in ["v_mean.csv", "lol_std.csv", "lol_mean.svg"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn predict_writes_long_table() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &with_small(&["train", "--variant", "dpinn-hetero", "--epochs", "5"]));
    ok(dir.path(), &["predict", "--set", "uq.samples=8", "--set", "uq.nx=11", "--set", "uq.dt=3600"]);
    let text = read(dir.path().join("prediction.csv"));
    assert_eq!(text.lines().next().unwrap(), "x,t_s,mean,eu,au,tu");
    let rows = csv_rows(&text);
    // 24 hourly nodes from 0 to 23:59 plus the end node
    assert_eq!(rows.len(), 11 * 25);
    for r in rows {
        let v: Vec<f64> = r.iter().map(|s| s.parse().unwrap()).collect();
        assert!((v[3] + v[4] - v[5]).abs() <= 1e-9 * v[5].abs().max(1.0));
    }
}

#[test]
fn sweep_single_cell_two_reps() {
    let dir = TempDir::new().unwrap();
    let args = with_small(&[
        "sweep", "--reps", "2", "--epochs", "5",
        "--set", "sweep.n0=[5]", "--set", "sweep.nr=[300]", "--set", "sweep.nb=[200]",
    ]);
    ok(dir.path(), &args);
    let text = read(dir.path().join("sweep.csv"));
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 1);
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    assert_eq!(rows[0][col("runs")], "2");
    assert_eq!(rows[0][col("failures")], "0");
    assert!(rows[0][col("crps_std")].parse::<f64>().unwrap() >= 0.0);
    let runs = csv_rows(&read(dir.path().join("sweep_runs.csv")));
    assert_ne!(runs[0][2], runs[1][2], "reps share a seed");
    assert!(dir.path().join("cells/cell_00_n0_5_nr_300_nb_200/rep_1/eval.json").exists());
}

#[test]
fn sweep_results_do_not_depend_on_jobs() {
    let args = |jobs: &'static str| {
        with_small(&[
            "sweep", "--reps", "2", "--epochs", "3", "--jobs", jobs,
            "--set", "sweep.n0=[5, 10]", "--set", "sweep.nr=[100]", "--set", "sweep.nb=[100, 300]",
        ])
    };
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    ok(a.path(), &args("1"));
    ok(b.path(), &args("3"));
    assert_eq!(read(a.path().join("sweep.csv")), read(b.path().join("sweep.csv")));
    assert_eq!(read(a.path().join("sweep_runs.csv")), read(b.path().join("sweep_runs.csv")));
    assert_eq!(csv_rows(&read(a.path().join("sweep.csv"))).len(), 4);
}

#[test]
fn sweep_records_failures_and_continues() {
    let dir = TempDir::new().unwrap();
    let args = with_small(&[
        "sweep", "--reps", "1", "--epochs", "20",
        "--set", "sweep.n0=[5]", "--set", "sweep.nr=[100]", "--set", "sweep.nb=[100]",
        "--set", "train.variant=pinn", "--set", "train.lr=1e6",
    ]);
    ok(dir.path(), &args);
    let rows = csv_rows(&read(dir.path().join("sweep.csv")));
    assert_eq!(rows[0][5], "1");
    assert!(read(dir.path().join("sweep_runs.csv")).contains("failed"));
}

#[test]
fn check_passes() {
    let dir = TempDir::new().unwrap();
    let o = bpinn(dir.path(), &["check"]);
    assert_eq!(o.status.code(), Some(0));
    let out = String::from_utf8_lossy(&o.stdout);
    assert_eq!(out.lines().filter(|l| l.starts_with("PASS")).count(), 7);
    assert!(!out.contains("FAIL"));
}
