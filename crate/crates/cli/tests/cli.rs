use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

fn toy_panel() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/toy_panel.csv")
}

fn mtp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mtp"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("run mtp")
}

fn run(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        sub,
        "--config",
        config.to_str().unwrap(),
        "--output-dir",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    mtp(&args)
}

/// Toy config rewritten with an absolute panel path and `edit` applied.
fn toy_config(dir: &Path, edit: impl Fn(String) -> String) -> PathBuf {
    let text = std::fs::read_to_string(data_dir().join("toy.toml")).unwrap();
    let text = text.replace(
        "\"../../../core/tests/data/toy_panel.csv\"",
        &format!("{:?}", toy_panel().canonicalize().unwrap()),
    );
    let path = dir.join("config.toml");
    std::fs::write(&path, edit(text)).unwrap();
    path
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn analyze_toy_panel_counts_and_reruns_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let config = data_dir().join("toy.toml");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let o = run("analyze", &config, &a, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run("analyze", &config, &b, &["--jobs", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));

    let csv_a = std::fs::read(a.join("toy.csv")).unwrap();
    assert_eq!(csv_a, std::fs::read(b.join("toy.csv")).unwrap());
    assert_eq!(
        std::fs::read(a.join("toy.json")).unwrap(),
        std::fs::read(b.join("toy.json")).unwrap()
    );

    // 8 weeks, lead 2, lag 1 → 5 weeks per index, 2 indices
    let text = String::from_utf8(csv_a).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.iter().filter(|r| r.contains(",adjusted,")).count(), 10);
    assert_eq!(rows.iter().filter(|r| r.contains(",unadjusted,")).count(), 10);
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("toy.json")).unwrap()).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 20);
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let config = data_dir().join("toy.toml");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run("analyze", &config, &a, &[]).status.success());
    assert!(run("analyze", &config, &b, &["--seed", "99"]).status.success());
    assert_ne!(
        std::fs::read(a.join("toy.csv")).unwrap(),
        std::fs::read(b.join("toy.csv")).unwrap()
    );
}

#[test]
fn missing_column_names_the_column() {
    let tmp = tempfile::tempdir().unwrap();
    let config = toy_config(tmp.path(), |t| {
        t.replace(
            "indices = [\"retail\", \"single_tile\"]",
            "indices = [\"retail\", \"single_tile\", \"workplace\"]",
        )
    });
    let o = run("analyze", &config, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("workplace"), "{}", stderr(&o));
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn validation_reports_every_problem() {
    let tmp = tempfile::tempdir().unwrap();
    let config = toy_config(tmp.path(), |t| {
        t.replace("schema_version = 1", "schema_version = 2")
            .replace("seed = 20201114\n", "")
            .replace("folds = 3", "folds = 1")
            .replace("value = 1.05\nclamp_lo", "value = -1.05\nclamp_lo")
    });
    let o = run("analyze", &config, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    for needle in ["schema_version", "seed", "analysis.folds", "policies[1]"] {
        assert!(err.contains(needle), "missing {needle} in {err}");
    }
}

#[test]
fn unknown_key_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let config = toy_config(tmp.path(), |t| t.replace("[preprocess]", "[preprocess]\nsmoothing = 3"));
    let o = run("analyze", &config, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("smoothing"), "{}", stderr(&o));
}

#[test]
fn validate_only_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = run("analyze", &data_dir().join("toy.toml"), &out, &["--validate-only"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn empty_population_filter_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let config = toy_config(tmp.path(), |t| {
        t.replace("population_threshold = 40000", "population_threshold = 1e9")
    });
    let o = run("analyze", &config, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn screen_and_diagnose_write_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let config = data_dir().join("toy.toml");
    let out = tmp.path().join("out");
    assert!(run("screen", &config, &out, &[]).status.success());
    let screening = std::fs::read_to_string(out.join("toy_screening.csv")).unwrap();
    // per-week top 4 of 10 covariates, 5 weeks, 2 indices
    let selected = screening.lines().filter(|l| l.contains(",true,")).count();
    assert_eq!(selected, 4 * 5 * 2);

    let o = run("diagnose-shift", &config, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let selection = std::fs::read_to_string(out.join("toy_selection.csv")).unwrap();
    assert_eq!(selection.lines().count(), 3);
}

#[test]
fn simulate_report_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = run("simulate", &data_dir().join("sim_small.toml"), &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = std::fs::read_to_string(out.join("sim.csv")).unwrap();
    let mut lines = report.lines();
    assert_eq!(
        lines.next().unwrap(),
        "cell,n,R,truth,mean_estimate,bias,sd,mean_se,coverage,ci_width"
    );
    assert_eq!(lines.count(), 3);
}

#[test]
fn missing_config_flag_exits_2() {
    let o = mtp(&["analyze"]);
    assert_eq!(o.status.code(), Some(2));
}
