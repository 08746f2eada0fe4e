use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn pca() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pca"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(args: &[&str]) -> Output {
    pca().args(args).output().expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn no_non_finite(text: &str) {
    for tok in text.split([',', '\n', ' ', '\t']) {
        let t = tok.trim().to_ascii_lowercase();
        assert!(t != "nan" && t != "inf" && t != "-inf", "non-finite token in output");
    }
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn column(rows: &[Vec<String>], name: &str) -> usize {
    rows[0].iter().position(|h| h == name).unwrap_or_else(|| panic!("missing column {name}"))
}

#[test]
fn negative_antiangiogenic_schedule_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(&[
        "simulate",
        "--config",
        path_str(&config("decay.toml")),
        "--out",
        path_str(&out),
        "--set",
        "therapy.s=[{ start = 0.0, value = -0.1 }]",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("negative"), "{err}");
    assert!(!out.join("series.csv").exists());
}

#[test]
fn missing_config_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["simulate", "--config", path_str(&dir.path().join("nope.toml"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn steady_initial_data_stays_put() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("steady");
    let o = run(&["simulate", "--config", path_str(&config("steady.toml")), "--out", path_str(&out), "--set", "run.t_end=1"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("series.csv")).unwrap();
    no_non_finite(&text);
    let rows = csv_rows(&text);
    assert!(rows.len() > 2);
    let first: Vec<f64> = rows[1].iter().map(|v| v.parse().unwrap()).collect();
    for row in &rows[2..] {
        let vals: Vec<f64> = row.iter().map(|v| v.parse().unwrap()).collect();
        // skip the time column
        for (a, b) in vals.iter().zip(&first).skip(1) {
            assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0), "{a} vs {b}");
        }
    }
}

#[test]
fn steady_routes_agree() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["steady", "--config", path_str(&config("steady.toml")), "--out", path_str(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let notes = fs::read_to_string(dir.path().join("steady_notes.txt")).unwrap();
    // gamma_h = 1, S_h = 0.5: the restriction fails yet the routes still agree
    assert!(notes.contains("holds,false"), "{notes}");
    let text = fs::read_to_string(dir.path().join("steady.csv")).unwrap();
    no_non_finite(&text);
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 4);
    for col in ["diff_closed_form", "diff_discrete", "diff_minimized"] {
        let c = column(&rows, col);
        for row in &rows[1..] {
            assert!(row[c].parse::<f64>().unwrap() <= 1e-8);
        }
    }
}

#[test]
fn verify_on_decay_config_predicts_half() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["verify", "--config", path_str(&config("decay.toml")), "--out", path_str(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let report = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    no_non_finite(&report);
    let beta = report
        .lines()
        .find(|l| l.starts_with("predicted,beta_predicted,"))
        .and_then(|l| l.split(',').nth(2))
        .unwrap();
    assert_eq!(beta.parse::<f64>().unwrap(), 0.5);
    for line in report.lines().filter(|l| l.starts_with("check,")) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[4], "true", "{line}");
    }
    assert!(fs::read_to_string(dir.path().join("verdicts.txt")).unwrap().contains("overall: PASS"));
}

#[test]
fn analyze_rereads_simulated_series() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("decay.toml");
    let sim = run(&["simulate", "--config", path_str(&cfg), "--out", path_str(dir.path())]);
    assert_eq!(sim.status.code(), Some(0));
    let series = fs::read_to_string(dir.path().join("series.csv")).unwrap();
    no_non_finite(&series);
    let an = run(&["analyze", "--config", path_str(&cfg), "--out", path_str(dir.path())]);
    assert_eq!(an.status.code(), Some(0), "{}", String::from_utf8_lossy(&an.stdout));
    assert!(dir.path().join("report.csv").exists());
}

#[test]
fn analyze_without_series_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["analyze", "--config", path_str(&config("decay.toml")), "--out", path_str(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_over_mobility_writes_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let o = pca()
        .args(["sweep", "--config", path_str(&config("sweep_M.toml")), "--out", path_str(dir.path())])
        .env("PCA_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    no_non_finite(&text);
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 4);
    for k in 0..3 {
        assert!(dir.path().join(format!("run_{k:03}")).join("series.csv").exists());
    }
    let hashes: Vec<&String> = rows[1..].iter().map(|r| &r[column(&rows, "params_hash")]).collect();
    assert!(hashes[0] != hashes[1] && hashes[1] != hashes[2]);
}

#[test]
fn sweep_over_lambda_crosses_the_condition() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "sweep",
        "--config",
        path_str(&config("sweep_lambda.toml")),
        "--out",
        path_str(dir.path()),
        "--set",
        "run.t_end=2",
    ]);
    assert!(matches!(o.status.code(), Some(0) | Some(1)), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&fs::read_to_string(dir.path().join("summary.csv")).unwrap());
    let c = column(&rows, "condition_met");
    let met: Vec<&str> = rows[1..].iter().map(|r| r[c].as_str()).collect();
    assert_eq!(met, ["false", "false", "true", "true"]);
}

#[test]
fn sweep_with_empty_axis_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(config("sweep_M.toml")).unwrap();
    let start = text.find("values").unwrap();
    let end = start + text[start..].find('\n').unwrap_or(text.len() - start);
    let cfg = dir.path().join("empty.toml");
    fs::write(&cfg, format!("{}values = []{}", &text[..start], &text[end..])).unwrap();
    let o = run(&["sweep", "--config", path_str(&cfg), "--out", path_str(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn clamp_flag_marks_run_non_conforming() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "verify",
        "--config",
        path_str(&config("decay.toml")),
        "--out",
        path_str(dir.path()),
        "--clamp",
        "--set",
        "run.t_end=2",
    ]);
    assert!(o.status.code().is_some());
    let report = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(report.contains("meta,conforming,,,,false"), "{report}");
}
