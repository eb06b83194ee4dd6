use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_neutsflow");

const SMALL: &str = "\
history_len = 24
horizon = 12
k = 4
top_k = 2
m_max = 6
hidden = 16
n_steps = 2
batch_size = 16
max_epochs = 2
train_stride = 2
lr = 0.005
";

fn synthetic_csv(dir: &Path, rows: usize, channels: usize) -> PathBuf {
    let mut text = String::from("date");
    for c in 0..channels {
        text += &format!(",ch{c}");
    }
    text.push('\n');
    let start = chrono::NaiveDate::from_ymd_opt(2016, 7, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
    for i in 0..rows {
        let ts = start + chrono::TimeDelta::hours(i as i64);
        text += &ts.format("%Y-%m-%d %H:%M:%S").to_string();
        for c in 0..channels {
            let s = i as f64;
            let v = (2.0 * std::f64::consts::PI * s / 24.0 + c as f64).sin() + 0.01 * s + 0.1 * ((s * 7.3).sin());
            text += &format!(",{v}");
        }
        text.push('\n');
    }
    let path = dir.join("series.csv");
    fs::write(&path, text).unwrap();
    path
}

fn setup(dir: &Path) -> PathBuf {
    let csv = synthetic_csv(dir, 500, 2);
    let cfg = dir.join("run.cfg");
    fs::write(&cfg, format!("dataset_path = {}\n{SMALL}", csv.display())).unwrap();
    cfg
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn train_is_reproducible_and_forecast_works() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(&["train", "--config", s(&cfg), "--out", s(out), "--seed", "5"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let ck = a.join("model.ckpt");
    assert_eq!(fs::read(&ck).unwrap(), fs::read(b.join("model.ckpt")).unwrap());
    let log = fs::read_to_string(a.join("train_log.csv")).unwrap();
    assert!(log.starts_with("epoch,train_loss,val_mse,wall_seconds\n"));

    // Re-running from the resolved echo reproduces the checkpoint.
    let echo = a.join("config.resolved");
    assert!(fs::read_to_string(&echo).unwrap().contains("seed = 5"));
    let c = dir.path().join("c");
    let o = run(&["train", "--config", s(&echo), "--out", s(&c)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(&ck).unwrap(), fs::read(c.join("model.ckpt")).unwrap());

    let input = dir.path().join("series.csv");
    let mut diffs = Vec::new();
    for n in ["1", "8"] {
        let out = dir.path().join(format!("fc{n}"));
        let o = run(&[
            "forecast", "--checkpoint", s(&ck), "--input", s(&input), "--n-steps", n, "--out", s(&out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        let text = fs::read_to_string(out.join("forecast.csv")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 13);
        assert_eq!(lines[0], "date,ch0,ch1");
        assert!(lines[1].starts_with("2016-07-21 20:00:00,"), "{}", lines[1]);
        assert!(lines.iter().all(|l| l.split(',').count() == 3));
        let side: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("forecast.json")).unwrap()).unwrap();
        diffs.push(side["diff_norm_vs_one_step"].as_f64().unwrap());
    }
    assert_eq!(diffs[0], 0.0);
    assert!(diffs[1].is_finite());

    // Channel mismatch names the expected count.
    let wide = tempfile::tempdir().unwrap();
    let three = synthetic_csv(wide.path(), 60, 3);
    let o = run(&["forecast", "--checkpoint", s(&ck), "--input", s(&three), "--out", s(wide.path())]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("C = 2"), "{}", stderr(&o));

    // Empty input is a usage error.
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "date,ch0,ch1\n").unwrap();
    let o = run(&["forecast", "--checkpoint", s(&ck), "--input", s(&empty), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn missing_dataset_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let o = run(&["train", "--set", &format!("dataset_path={}", s(&missing)), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("nope.csv"));
}

#[test]
fn unknown_key_is_a_usage_error() {
    let o = run(&["ingest", "--set", "learning_rate=0.1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("learning_rate"));
    let o = run(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn ingest_validates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path());
    let o = run(&["ingest", "--config", s(&cfg)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("500 rows x 2 channels"));
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "date,a\n2020-01-01 00:00:00,1\n2020-01-01 01:00:00,\n2020-01-01 02:00:00,3\n").unwrap();
    let o = run(&["ingest", "--set", &format!("dataset_path={}", s(&bad))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn ablate_writes_five_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path());
    let out = dir.path().join("out");
    let o = run(&["ablate", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let reports = out.join("reports");
    let json: Vec<_> = fs::read_dir(&reports)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "json"))
        .collect();
    assert_eq!(json.len(), 5);
    let summary = fs::read_to_string(reports.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 6);
    let mut ranks: Vec<usize> = summary.lines().skip(1).map(|l| l.split(',').nth(3).unwrap().parse().unwrap()).collect();
    ranks.sort();
    assert_eq!(ranks, vec![1, 2, 3, 4, 5]);
}

#[test]
fn crtl_eval_notes_decimated_scoring() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path());
    let out = dir.path().join("out");
    let o = run(&[
        "eval", "--config", s(&cfg), "--out", s(&out), "--set", "task=CRTL", "--set", "history_len=6", "--set", "horizon=auto",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = fs::read_to_string(out.join("reports/summary.csv")).unwrap();
    assert!(summary.contains("scored at 6 after factor-4 decimation"), "{summary}");
    assert!(out.join("reports/CRTL_series_full.json").exists());
}

#[test]
fn gradcheck_default_config_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["gradcheck", "--out", s(dir.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout).into_owned();
    let v: f64 = stdout
        .split("max relative gradient error: ")
        .nth(1)
        .and_then(|r| r.split_whitespace().next())
        .unwrap()
        .parse()
        .unwrap();
    assert!(v < 1e-4, "{stdout}");
}
