use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use iipmix::checkpoint::Checkpoint;
use iipmix::config::parse_config;
use iipmix::io::{read_report, REPORT_HEADER};

const SMALL: &str = "\
[train]
epochs = 4
seeds = [0, 1]

[data]
principal_features = 3

[data.synth]
cycles = 120

[data.forest]
n_trees = 10
";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_iipmix"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("spawn iipmix")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn workdir() -> tempfile::TempDir {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("c.toml"), SMALL).unwrap();
    d
}

fn only_run_dir(root: &Path) -> PathBuf {
    let dirs: Vec<PathBuf> = fs::read_dir(root).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs[0].clone()
}

#[test]
fn synth_is_byte_identical_across_runs() {
    let d = workdir();
    ok(d.path(), &["synth", "--cycles", "300", "--seed", "7", "--out", "a.csv"]);
    ok(d.path(), &["synth", "--cycles", "300", "--seed", "7", "--out", "b.csv"]);
    let a = fs::read(d.path().join("a.csv")).unwrap();
    assert_eq!(a, fs::read(d.path().join("b.csv")).unwrap());
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with(
        "battery_id,cycle,capacity_ah,voltage_min,voltage_max,voltage_mean,current_min,current_max,current_mean,temp_min,temp_max,temp_mean\n"
    ));
    assert_eq!(text.lines().count(), 1 + 4 * 300);
    ok(d.path(), &["synth", "--cycles", "300", "--seed", "8", "--out", "c.csv"]);
    assert_ne!(fs::read(d.path().join("a.csv")).unwrap(), fs::read(d.path().join("c.csv")).unwrap());
}

#[test]
fn missing_config_fails_without_outputs() {
    let d = workdir();
    let out = run(d.path(), &["train", "--config", "missing.toml", "--out-dir", "runs"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.toml"));
    assert!(!d.path().join("runs").exists());
}

#[test]
fn usage_errors_exit_with_2() {
    let d = workdir();
    for args in [&["train", "--bogus"][..], &["frobnicate"], &["ablate", "--axis", "nope"], &[]] {
        let out = run(d.path(), args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn rejected_config_values_exit_nonzero() {
    let d = workdir();
    let out = run(d.path(), &["train", "--config", "c.toml", "--set", "model.patch_len=5"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(d.path(), &["train", "--config", "c.toml", "--test-battery", "B0018"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("B0018"));
}

#[test]
fn train_writes_the_run_layout_and_evaluate_reproduces_it() {
    let d = workdir();
    ok(d.path(), &["train", "--config", "c.toml", "--out-dir", "runs"]);
    let run_dir = only_run_dir(&d.path().join("runs"));
    for f in [
        "checkpoint",
        "history.csv",
        "report.csv",
        "seeds.csv",
        "rul.csv",
        "trajectory.csv",
        "importance.csv",
        "config.toml",
    ] {
        assert!(run_dir.join(f).is_file(), "{f}");
    }
    let cfg = parse_config(SMALL, &[]).unwrap();
    let hash = iipmix::config::config_hash(&cfg).unwrap();
    assert_eq!(run_dir.file_name().unwrap().to_str().unwrap(), hash);

    let history = fs::read_to_string(run_dir.join("history.csv")).unwrap();
    assert!(history.starts_with("seed,epoch,train_loss,val_loss\n"));
    assert_eq!(history.lines().count(), 1 + 2 * 4);

    let report = fs::read_to_string(run_dir.join("report.csv")).unwrap();
    assert!(report.starts_with(&REPORT_HEADER.join(",")));

    let ckpt_path = run_dir.join("checkpoint");
    ok(
        d.path(),
        &["evaluate", "--checkpoint", ckpt_path.to_str().unwrap(), "--out", "eval.csv"],
    );
    assert_eq!(fs::read_to_string(d.path().join("eval.csv")).unwrap(), report);
}

#[test]
fn checkpoint_round_trips_bitwise() {
    let d = workdir();
    ok(d.path(), &["train", "--config", "c.toml", "--out-dir", "runs"]);
    let text = fs::read_to_string(only_run_dir(&d.path().join("runs")).join("checkpoint")).unwrap();
    let ckpt = Checkpoint::parse(&text).unwrap();
    assert_eq!(ckpt.models.len(), 2);
    assert_eq!(ckpt.to_text().unwrap(), text);
    let tampered = text.replacen("epochs = 4", "epochs = 5", 1);
    assert!(Checkpoint::parse(&tampered).is_err());
}

#[test]
fn csv_source_matches_the_generator() {
    let d = workdir();
    ok(d.path(), &["synth", "--cycles", "120", "--seed", "0", "--out", "fleet.csv"]);
    ok(d.path(), &["train", "--config", "c.toml", "--out-dir", "from_synth"]);
    ok(d.path(), &["train", "--config", "c.toml", "--data", "fleet.csv", "--out-dir", "from_csv"]);
    let a = fs::read(only_run_dir(&d.path().join("from_synth")).join("report.csv")).unwrap();
    let b = fs::read(only_run_dir(&d.path().join("from_csv")).join("report.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn ablate_heads_writes_three_rows() {
    let d = workdir();
    ok(d.path(), &["ablate", "--config", "c.toml", "--axis", "heads", "--out", "heads.csv"]);
    let rows = read_report(fs::File::open(d.path().join("heads.csv")).unwrap()).unwrap();
    let labels: Vec<&str> = rows.iter().map(|r| r.method.as_str()).collect();
    assert_eq!(labels, ["intra_only", "inter_only", "parallel"]);
    assert!(rows.iter().all(|r| r.values[0].is_some() && r.values[1].is_some()));
}

#[test]
fn report_collects_runs_into_one_table() {
    let d = workdir();
    ok(d.path(), &["train", "--config", "c.toml", "--out-dir", "runs"]);
    ok(d.path(), &["train", "--config", "c.toml", "--arch", "dlinear", "--out-dir", "runs"]);
    let dirs: Vec<String> = {
        let mut v: Vec<String> = fs::read_dir(d.path().join("runs"))
            .unwrap()
            .map(|e| e.unwrap().path().to_string_lossy().into_owned())
            .collect();
        v.sort();
        v
    };
    assert_eq!(dirs.len(), 2);
    let mut args = vec!["report"];
    args.extend(dirs.iter().map(String::as_str));
    args.extend(["--out", "table.csv"]);
    let stdout = ok(d.path(), &args);
    assert!(stdout.contains("MAE(Ah)"));
    let rows = read_report(fs::File::open(d.path().join("table.csv")).unwrap()).unwrap();
    let mut methods: Vec<&str> = rows.iter().map(|r| r.method.as_str()).collect();
    methods.sort();
    assert_eq!(methods, ["DLinear", "IIP-Mixer"]);
}

#[test]
fn diverged_run_keeps_its_history_only() {
    let d = workdir();
    let out = run(
        d.path(),
        &["train", "--config", "c.toml", "--lr", "1e6", "--epochs", "30", "--out-dir", "runs"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("diverged"));
    let run_dir = only_run_dir(&d.path().join("runs"));
    assert!(run_dir.join("history.csv").is_file());
    assert!(!run_dir.join("report.csv").exists());
    assert!(!run_dir.join("checkpoint").exists());
}

#[test]
fn importance_csv_marks_the_selection() {
    let d = workdir();
    let stdout = ok(d.path(), &["importance", "--config", "c.toml"]);
    let mut lines = stdout.lines();
    assert_eq!(lines.next(), Some("feature,importance,selected"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 11);
    assert_eq!(rows.iter().filter(|r| r[2] == "true").count(), 3);
    let cap = rows.iter().find(|r| r[0] == "capacity_ah").unwrap();
    assert_eq!(cap[2], "true");
    let total: f64 = rows.iter().map(|r| r[1].parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-12);
}
