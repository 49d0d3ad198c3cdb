//! End-to-end runs of the `stockcast` binary on small inputs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use stockcast::zoo::load;
use stockcast_cli::pipeline::{build_model, Arch, WindowArgs};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_stockcast"));
    c.env("RUST_LOG", "warn").env_remove("ALPHAVANTAGE_API_KEY");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
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

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

/// Daily CSV with the given closes (other prices equal to close).
fn write_closes(path: &Path, closes: &[Option<f64>]) {
    let mut s = String::from("date,open,high,low,close,volume\n");
    for (i, c) in closes.iter().enumerate() {
        let v = c.map(|x| x.to_string()).unwrap_or_default();
        let p = c.map(|x| x.to_string()).unwrap_or_else(|| "1".into());
        let _ = writeln!(s, "{},{p},{p},{p},{v},100", chrono_like_date(i));
    }
    std::fs::write(path, s).unwrap();
}

/// `2001-01-01` plus `i` days, within a 28-day-month calendar for simplicity.
fn chrono_like_date(i: usize) -> String {
    let (y, rem) = (2001 + i / (12 * 28), i % (12 * 28));
    format!("{y}-{:02}-{:02}", rem / 28 + 1, rem % 28 + 1)
}

fn sine(n: usize) -> Vec<Option<f64>> {
    (0..n)
        .map(|i| Some(10.0 + (i as f64 * std::f64::consts::TAU / 50.0).sin()))
        .collect()
}

const SMALL: &[&str] = &["--window", "40", "--outer-steps", "2", "--epochs", "2", "--batch-size", "32", "--seed", "7"];

#[test]
fn fetch_fixture_writes_cache() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixtures();
    let out = ok(dir.path(), &["fetch", "--symbol", "IBM", "--fixtures", f.to_str().unwrap()]);
    assert!(out.contains("from fixture"), "{out}");
    assert!(dir.path().join("data/IBM.csv").exists());
}

#[test]
fn fetch_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixtures();
    let out = run(dir.path(), &["fetch", "--symbol", "BADKEY", "--fixtures", f.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("API key rejected"));

    let out = run(dir.path(), &["fetch", "--symbol", "RATELIMIT", "--fixtures", f.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("retry after 60 s"), "{err}");

    let out = run(dir.path(), &["fetch", "--symbol", "IBM"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ALPHAVANTAGE_API_KEY"));
}

#[test]
fn explore_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_closes(&d.join("FLAT.csv"), &[Some(5.0); 6]);
    ok(d, &["explore", "--csv", "FLAT.csv", "--ma-windows", "3"]);
    let eda = std::fs::read_to_string(d.join("out/FLAT_eda.csv")).unwrap();
    let rows: Vec<&str> = eda.lines().skip(1).collect();
    assert!(rows[1..].iter().all(|r| r.ends_with(",0")), "{eda}");
    assert!(d.join("out/FLAT_close.svg").exists());

    write_closes(&d.join("FOUR.csv"), &[Some(1.0), Some(2.0), Some(3.0), Some(4.0)]);
    ok(d, &["explore", "--csv", "FOUR.csv", "--ma-windows", "3"]);
    let eda = std::fs::read_to_string(d.join("out/FOUR_eda.csv")).unwrap();
    assert!(eda.starts_with("date,close,ma_3,daily_return\n"));
    let ma: Vec<&str> = eda.lines().skip(1).map(|l| l.split(',').nth(2).unwrap()).filter(|v| !v.is_empty()).collect();
    assert_eq!(ma, ["2", "3"]);

    write_closes(&d.join("GAPS.csv"), &[Some(1.0), None, Some(3.0), None]);
    let out = ok(d, &["explore", "--csv", "GAPS.csv"]);
    assert!(out.contains("imputed 2 missing values"), "{out}");
}

#[test]
fn schema_error_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("BAD.csv"), "when,price\n2020-01-01,1\n").unwrap();
    assert_eq!(run(dir.path(), &["explore", "--csv", "BAD.csv"]).status.code(), Some(2));
}

#[test]
fn train_is_deterministic_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_closes(&d.join("SINE.csv"), &sine(300));
    let mut args = vec!["train", "--csv", "SINE.csv", "--out", "a"];
    args.extend_from_slice(SMALL);
    ok(d, &args);
    args[4] = "b";
    ok(d, &args);
    for f in ["history.csv", "report.json", "cnn-lstm.model"] {
        assert_eq!(std::fs::read(d.join("a").join(f)).unwrap(), std::fs::read(d.join("b").join(f)).unwrap(), "{f}");
    }
    assert!(d.join("a/loss.svg").exists());

    let trained: Value = serde_json::from_str(&std::fs::read_to_string(d.join("a/report.json")).unwrap()).unwrap();
    let plain: Value = serde_json::from_str(&ok(d, &["evaluate", "--model", "a/cnn-lstm.model", "--csv", "SINE.csv"])).unwrap();
    assert_eq!(plain, trained);
    let keys: Vec<&String> = plain.as_object().unwrap().keys().collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(sorted, ["explained_variance", "mae", "max_error", "mse", "n_samples", "r2"]);

    let shuffled: Value = serde_json::from_str(&ok(
        d,
        &["evaluate", "--model", "a/cnn-lstm.model", "--csv", "SINE.csv", "--shuffle", "--seed", "9"],
    ))
    .unwrap();
    assert_eq!(shuffled["mse"], plain["mse"]);
    assert!(d.join("out/evaluation.json").exists());
}

#[test]
fn zero_learning_rate_keeps_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_closes(&d.join("SINE.csv"), &sine(200));
    ok(
        d,
        &["train", "--csv", "SINE.csv", "--arch", "lstm", "--epochs", "1", "--lr", "0", "--window", "20", "--seed", "5"],
    );
    let (net, _, meta) = load(&d.join("out/lstm.model")).unwrap();
    assert_eq!(meta.epochs_run, 1);
    let w = WindowArgs {
        window: 20,
        outer_steps: 4,
        horizon: 1,
        ratio: 0.8,
        shuffle: false,
        seed: 5,
    };
    let init = build_model(Arch::Lstm, &w).unwrap();
    for ((n1, a), (n2, b)) in net.named_params().iter().zip(init.named_params().iter()) {
        assert_eq!(n1, n2);
        assert_eq!(a, b);
    }
}

#[test]
fn nan_without_cleaning_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut s = sine(200);
    s[50] = Some(f64::NAN);
    write_closes(&d.join("NAN.csv"), &s);
    let mut args = vec!["train", "--csv", "NAN.csv", "--no-clean"];
    args.extend_from_slice(SMALL);
    assert_eq!(run(d, &args).status.code(), Some(3));
    args.remove(3);
    assert_eq!(run(d, &args).status.code(), Some(0));
}

#[test]
fn predict_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let n = 200;
    write_closes(&d.join("SINE.csv"), &sine(n));
    let mut args = vec!["train", "--csv", "SINE.csv"];
    args.extend_from_slice(SMALL);
    ok(d, &args);
    ok(d, &["predict", "--model", "out/cnn-lstm.model", "--csv", "SINE.csv", "--steps", "3"]);
    let csv = std::fs::read_to_string(d.join("out/predictions.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), n - 40 - 1 + 1);
    for r in &rows {
        let p: f64 = r.split(',').nth(2).unwrap().parse().unwrap();
        assert!(p > 5.0 && p < 15.0, "{r}");
    }
    let forecast = std::fs::read_to_string(d.join("out/forecast.csv")).unwrap();
    assert_eq!(forecast.lines().count(), 4);
    assert!(forecast.lines().nth(1).unwrap().contains("free-running"));
    assert!(d.join("out/predictions.svg").exists());

    write_closes(&d.join("SHORT.csv"), &sine(40));
    let out = run(d, &["predict", "--model", "out/cnn-lstm.model", "--csv", "SHORT.csv"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(d, &["evaluate", "--model", "out/cnn-lstm.model", "--csv", "SHORT.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn preprocess_and_import() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_closes(&d.join("raw.csv"), &sine(150));
    ok(d, &["import", "--csv", "raw.csv", "--symbol", "SIN"]);
    assert!(d.join("data/SIN.csv").exists());
    let out = ok(d, &["preprocess", "--symbol", "SIN", "--window", "40", "--outer-steps", "2"]);
    assert!(out.contains("110 windows: 88 train, 22 test"), "{out}");
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(d.join("out/preprocess.json")).unwrap()).unwrap();
    assert_eq!(summary["train"], 88);
    assert_eq!(std::fs::read_to_string(d.join("out/split.csv")).unwrap().lines().count(), 111);
}

#[test]
fn invalid_configuration_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_closes(&d.join("SINE.csv"), &sine(200));
    for bad in [
        vec!["train", "--csv", "SINE.csv", "--window", "30", "--outer-steps", "2"],
        vec!["train", "--csv", "SINE.csv", "--ratio", "1.5"],
        vec!["train", "--csv", "SINE.csv", "--epochs", "0"],
        vec!["train"],
    ] {
        assert_eq!(run(d, &bad).status.code(), Some(2), "{bad:?}");
    }
}
