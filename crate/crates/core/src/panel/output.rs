//! Results tables (CSV and JSON mirrors).

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::grid::GridResult;
use crate::error::{MtpError, Result};
use crate::estimate::ShiftEstimate;

/// One estimator's result for one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub week_start: String,
    pub index: String,
    pub policy_kind: String,
    pub policy_value: f64,
    pub estimator: String,
    pub n: usize,
    pub psi_delta: f64,
    pub std_err: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub max_density_ratio: f64,
    pub mean_density_ratio: f64,
    pub truncated_shift_count: usize,
    /// Semicolon-joined.
    pub screened_covariates: String,
    pub dropped_rows: usize,
}

fn row(r: &GridResult, estimator: &str, est: &ShiftEstimate, screened: String) -> ResultRow {
    ResultRow {
        week_start: r.week_start.format("%Y-%m-%d").to_string(),
        index: r.spec.index.clone(),
        policy_kind: r.spec.policy.kind_label().to_string(),
        policy_value: r.spec.policy.value(),
        estimator: estimator.to_string(),
        n: est.n,
        psi_delta: est.psi_delta,
        std_err: est.std_err,
        ci_lo: est.ci_lo,
        ci_hi: est.ci_hi,
        max_density_ratio: est.max_density_ratio,
        mean_density_ratio: est.mean_density_ratio,
        truncated_shift_count: est.truncated_shift_count,
        screened_covariates: screened,
        dropped_rows: r.dropped_rows,
    }
}

/// Two rows per cell, adjusted first.
pub fn result_rows(results: &[GridResult]) -> Vec<ResultRow> {
    results
        .iter()
        .flat_map(|r| {
            [
                row(r, "adjusted", &r.adjusted, r.screened.join(";")),
                row(r, "unadjusted", &r.unadjusted, String::new()),
            ]
        })
        .collect()
}

pub fn write_results_csv<W: Write>(writer: W, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_results_json<W: Write>(mut writer: W, rows: &[ResultRow]) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, rows).map_err(|e| MtpError::Io(e.to_string()))?;
    writer.write_all(b"\n")?;
    Ok(())
}

/// Write `<stem>.csv` and `<stem>.json` into `dir`.
pub fn write_results(dir: &Path, stem: &str, rows: &[ResultRow]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let csv_file = std::fs::File::create(dir.join(format!("{stem}.csv")))?;
    write_results_csv(std::io::BufWriter::new(csv_file), rows)?;
    let json_file = std::fs::File::create(dir.join(format!("{stem}.json")))?;
    write_results_json(std::io::BufWriter::new(json_file), rows)
}
