use std::path::PathBuf;

use chrono::NaiveDate;
use mtp_core::learners::LearnerSpec;
use mtp_core::panel::*;
use mtp_core::policy::ShiftPolicy;
use mtp_core::tmle::estimate_shift;
use mtp_core::Execution;

fn toy_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/toy_panel.csv")
}

fn toy_schema() -> PanelSchema {
    PanelSchema {
        county_id: "fips".into(),
        date: "date".into(),
        date_format: "%Y-%m-%d".into(),
        population: "population".into(),
        cases: "cases_cumulative".into(),
        cases_kind: CasesKind::Cumulative,
        covariates: (1..=10).map(|j| format!("c{j}")).collect(),
        indices: vec!["retail".into(), "single_tile".into()],
        delimiter: ',',
        missing: vec!["NA".into()],
    }
}

fn toy_window() -> StudyWindow {
    StudyWindow {
        start: NaiveDate::from_ymd_opt(2020, 6, 1).unwrap(),
        end: NaiveDate::from_ymd_opt(2020, 7, 26).unwrap(),
    }
}

fn toy_panel() -> WeeklyPanel {
    let (table, report) = ingest(&toy_path(), &toy_schema()).unwrap();
    assert!(report.rejected.is_empty());
    let weekly = bin_weekly(&table, toy_window(), CaseAggregation::Sum);
    filter_population(&weekly, 40_000.0).0
}

fn policies() -> Vec<(String, ShiftPolicy)> {
    vec![
        ("retail".into(), ShiftPolicy::additive(-5.0).unwrap()),
        ("single_tile".into(), ShiftPolicy::multiplicative(1.05).unwrap()),
    ]
}

fn config(exec: Execution) -> GridConfig {
    let lib = vec![LearnerSpec::mean(), LearnerSpec::glm()];
    let mut cfg = GridConfig::new(lib.clone(), lib, 3, 7);
    cfg.min_slice_size = 10;
    cfg.execution = exec;
    cfg
}

#[test]
fn toy_slice_count_follows_lead_and_lag() {
    let panel = toy_panel();
    assert_eq!(panel.counties.len(), 12);
    assert_eq!(panel.week_range(), Some((0, 7)));
    for (lead, lag, expected) in [
        (2, LagMode::PreviousWeek, 5),
        (1, LagMode::PreviousWeek, 6),
        (2, LagMode::CurrentWeek, 6),
        (1, LagMode::CurrentWeek, 7),
    ] {
        let specs = build_slice_specs(&panel, &policies(), lead, ConfounderMode::PerWeekTop4, lag).unwrap();
        assert_eq!(specs.len(), 2 * expected, "lead {lead} lag {lag:?}");
    }
}

#[test]
fn grid_rows_and_determinism() {
    let panel = toy_panel();
    let specs = build_slice_specs(
        &panel,
        &policies(),
        2,
        ConfounderMode::PerWeekTop4,
        LagMode::PreviousWeek,
    )
    .unwrap();
    let out = run_grid(&panel, &specs, &config(Execution::Parallel));
    assert!(out.skipped.is_empty(), "{:?}", out.skipped);
    let rows = result_rows(&out.results);
    assert_eq!(rows.iter().filter(|r| r.estimator == "adjusted").count(), 10);
    assert_eq!(rows.iter().filter(|r| r.estimator == "unadjusted").count(), 10);
    for r in &out.results {
        assert_eq!(r.adjusted.n, r.unadjusted.n);
        assert_eq!(r.screened.len(), 4);
    }

    let dir = tempfile::tempdir().unwrap();
    write_results(dir.path(), "grid", &rows).unwrap();
    let a = std::fs::read(dir.path().join("grid.csv")).unwrap();
    let json: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("grid.json")).unwrap()).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 20);
    let again = run_grid(&panel, &specs, &config(Execution::Sequential));
    let mut b = Vec::new();
    write_results_csv(&mut b, &result_rows(&again.results)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn single_cell_grid_matches_direct_estimate() {
    let panel = toy_panel();
    let specs = build_slice_specs(
        &panel,
        &policies(),
        2,
        ConfounderMode::PooledTop8,
        LagMode::PreviousWeek,
    )
    .unwrap();
    let spec = specs[2].clone();
    let cfg = config(Execution::Sequential);
    let out = run_grid(&panel, std::slice::from_ref(&spec), &cfg);
    let cell = &out.results[0];

    let data = GridData::prepare(&panel, std::slice::from_ref(&spec));
    let slice = data.slice_frame(&spec).unwrap();
    let direct = estimate_shift(&slice.frame, &spec.policy, &cfg.tmle_config(spec.seed(cfg.seed))).unwrap();
    assert_eq!(cell.adjusted, direct);
    assert_eq!(slice.frame.covariate_names().last().unwrap(), "lagged_case_rate");
}

#[test]
fn row_order_does_not_change_preprocessing() {
    let text = std::fs::read_to_string(toy_path()).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    let header = lines.remove(0);
    lines.reverse();
    let shuffled = format!("{header}\n{}\n", lines.join("\n"));
    let (t1, _) = ingest(&toy_path(), &toy_schema()).unwrap();
    let (t2, _) = ingest_reader(shuffled.as_bytes(), &toy_schema()).unwrap();
    assert_eq!(t1, t2);
    let w1 = bin_weekly(&t1, toy_window(), CaseAggregation::Sum);
    let w2 = bin_weekly(&t2, toy_window(), CaseAggregation::Sum);
    assert_eq!(w1, w2);
}

#[test]
fn min_slice_size_skips_with_reason() {
    let panel = toy_panel();
    let specs = build_slice_specs(
        &panel,
        &policies()[..1],
        2,
        ConfounderMode::PerWeekTop4,
        LagMode::PreviousWeek,
    )
    .unwrap();
    let mut cfg = config(Execution::Sequential);
    cfg.min_slice_size = 50;
    let out = run_grid(&panel, &specs, &cfg);
    assert!(out.results.is_empty());
    assert_eq!(out.skipped.len(), specs.len());
    assert!(out.skipped[0].reason.contains("minimum of 50"));
    assert!(!out.skipped[0].estimation_error);
}

#[test]
fn missing_column_is_named() {
    let mut schema = toy_schema();
    schema.indices.push("workplace".into());
    let err = ingest(&toy_path(), &schema).unwrap_err();
    assert!(err.to_string().contains("workplace"), "{err}");
}
