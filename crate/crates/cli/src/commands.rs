//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::Serialize;

use mtp_core::panel::{
    bin_weekly, build_slice_specs, diagnose_shift, filter_population, ingest, result_rows, run_grid, write_results,
    DiagnoseConfig, GridConfig, GridData, SliceSpec, WeeklyPanel,
};
use mtp_core::par::{map_slice, with_jobs};
use mtp_core::policy::ShiftPolicy;
use mtp_core::rng::{derive_seed, derive_seed_str};
use mtp_core::sim::{replicate, true_value, ReplicationSetup};
use mtp_core::tmle::TmleConfig;
use mtp_core::Execution;

use crate::config::{Command, RunConfig};
use crate::error::CliError;

pub struct Invocation {
    pub command: Command,
    pub config: RunConfig,
    pub seed: u64,
    pub jobs: Option<usize>,
    pub output_dir: PathBuf,
}

impl Invocation {
    /// Validate everything that can be checked without computation.
    pub fn prepare(
        command: Command,
        config_path: &Path,
        seed: Option<u64>,
        jobs: Option<usize>,
        output_dir: Option<PathBuf>,
    ) -> Result<Self, CliError> {
        let config = RunConfig::from_path(config_path).map_err(CliError::Config)?;
        let mut problems = config.validate(command, seed);
        if jobs == Some(0) {
            problems.push("--jobs must be at least 1".into());
        }
        if command != Command::Simulate {
            problems.extend(check_header(&config));
        }
        if !problems.is_empty() {
            return Err(CliError::Config(problems));
        }
        let output_dir = output_dir.unwrap_or_else(|| config.resolve(&config.output.dir));
        Ok(Invocation {
            command,
            seed: seed.or(config.seed).expect("validated"),
            config,
            jobs,
            output_dir,
        })
    }

    pub fn run(&self) -> Result<(), CliError> {
        with_jobs(self.jobs, || match self.command {
            Command::Analyze => self.analyze(),
            Command::Simulate => self.simulate(),
            Command::DiagnoseShift => self.diagnose(),
            Command::Screen => self.screen(),
        })
    }

    fn out(&self, suffix: &str) -> PathBuf {
        self.output_dir.join(format!("{}{suffix}", self.config.output.stem))
    }

    fn load_panel(&self) -> Result<WeeklyPanel, CliError> {
        let cfg = &self.config;
        let path = cfg.panel_path().expect("validated");
        let schema = cfg.schema.as_ref().expect("validated");
        let (table, report) = ingest(&path, schema)?;
        info!(
            "read {} rows from {}, accepted {}, rejected {}",
            report.rows_read,
            path.display(),
            report.rows_accepted,
            report.rejected.len()
        );
        for (line, reason) in &report.rejected {
            warn!("line {line}: {reason}");
        }
        let weekly = bin_weekly(&table, cfg.window(), cfg.preprocess.case_aggregation);
        if weekly.revisions_floored > 0 {
            warn!(
                "{} negative cumulative-case revisions floored at 0",
                weekly.revisions_floored
            );
        }
        let (panel, summary) = filter_population(&weekly, cfg.preprocess.population_threshold);
        info!(
            "population filter ≥ {}: kept {} counties, excluded {}, kept population share {:.3}",
            summary.threshold, summary.kept, summary.excluded, summary.kept_population_share
        );
        if panel.counties.is_empty() {
            return Err(CliError::Data("no county passes the population filter".into()));
        }
        Ok(panel)
    }

    fn policies(&self) -> Vec<(String, ShiftPolicy)> {
        self.config
            .policies
            .iter()
            .map(|e| (e.index.clone(), e.policy().expect("validated")))
            .collect()
    }

    fn specs(&self, panel: &WeeklyPanel, policies: &[(String, ShiftPolicy)]) -> Result<Vec<SliceSpec>, CliError> {
        let a = &self.config.analysis;
        let specs = build_slice_specs(panel, policies, a.lead_weeks, a.confounders, a.lag)?;
        if specs.is_empty() {
            return Err(CliError::Data(format!(
                "no week in the study window has data {} week(s) ahead and at the lagged week",
                a.lead_weeks
            )));
        }
        Ok(specs)
    }

    fn grid_config(&self) -> GridConfig {
        let a = &self.config.analysis;
        let (q_lib, r_lib) = a.libraries();
        let mut g = GridConfig::new(q_lib, r_lib, a.folds, self.seed);
        g.min_slice_size = a.min_slice_size;
        g.ratio_truncation = a.ratio_truncation;
        g.outcome_bounds = a.outcome_bounds.map(|[lo, hi]| (lo, hi));
        g.execution = Execution::Parallel;
        g
    }

    fn analyze(&self) -> Result<(), CliError> {
        let panel = self.load_panel()?;
        let specs = self.specs(&panel, &self.policies())?;
        info!("running {} slices", specs.len());
        let out = run_grid(&panel, &specs, &self.grid_config());
        let rows = result_rows(&out.results);
        write_results(&self.output_dir, &self.config.output.stem, &rows)?;

        let mut w = csv::Writer::from_path(self.out("_skipped.csv"))?;
        w.write_record(["week_start", "index", "policy_kind", "policy_value", "reason"])?;
        for s in &out.skipped {
            w.write_record([
                panel.window.week_start(s.spec.week).to_string(),
                s.spec.index.clone(),
                s.spec.policy.kind_label().to_string(),
                s.spec.policy.value().to_string(),
                s.reason.clone(),
            ])?;
        }
        w.flush()?;

        println!(
            "analyzed {} of {} slices ({} skipped); results in {}",
            out.results.len(),
            specs.len(),
            out.skipped.len(),
            self.out(".csv").display()
        );
        for r in &out.results {
            println!(
                "{} {:>14} {:>14} {:>5}  adjusted {:>9.3} ({:.3}, {:.3})  unadjusted {:>9.3} ({:.3}, {:.3})",
                r.week_start,
                r.spec.index,
                r.spec.policy.kind_label(),
                r.spec.policy.value(),
                r.adjusted.psi_delta,
                r.adjusted.ci_lo,
                r.adjusted.ci_hi,
                r.unadjusted.psi_delta,
                r.unadjusted.ci_lo,
                r.unadjusted.ci_hi
            );
        }
        if out.results.is_empty() {
            let reason = out.skipped.first().map(|s| s.reason.clone()).unwrap_or_default();
            return Err(if out.skipped.iter().any(|s| s.estimation_error) {
                CliError::Estimation(format!("no slice could be estimated; first failure: {reason}"))
            } else {
                CliError::Data(format!("no slice has enough complete rows; first reason: {reason}"))
            });
        }
        Ok(())
    }

    fn simulate(&self) -> Result<(), CliError> {
        let s = self.config.simulate.as_ref().expect("validated");
        let policy = s.policy.to_policy().expect("validated");
        let truth = match s.truth {
            Some(t) => t,
            None => {
                let t = true_value(
                    &s.dgp,
                    &policy,
                    s.truth_mc,
                    derive_seed_str(self.seed, "truth"),
                    Execution::Parallel,
                )?;
                info!("Monte Carlo truth {:.6} (mc se {:.2e})", t.psi_delta, t.mc_se_delta);
                t.psi_delta
            }
        };
        let mut rows = Vec::new();
        for cell in &s.cells {
            let sizes = cell.n.clone().unwrap_or_else(|| vec![s.n]);
            let estimator = TmleConfig::new(cell.outcome_library.clone(), cell.ratio_library.clone(), s.folds, 0);
            for n in sizes {
                info!("simulating cell {} with n={n}, R={}", cell.name, s.replications);
                let setup = ReplicationSetup {
                    cell: &cell.name,
                    dgp: &s.dgp,
                    policy: &policy,
                    estimator: &estimator,
                    replications: s.replications,
                    n,
                    seed: derive_seed(derive_seed_str(self.seed, &cell.name), n as u64),
                    truth,
                    execution: Execution::Parallel,
                };
                let (report, _) = replicate(&setup)?;
                if report.failures > 0 {
                    warn!(
                        "cell {} n={n}: {} failed replications excluded",
                        cell.name, report.failures
                    );
                }
                rows.push(SimRow {
                    cell: report.cell,
                    n: report.n,
                    r: report.r,
                    truth: report.truth,
                    mean_estimate: report.mean_estimate,
                    bias: report.bias,
                    sd: report.sd,
                    mean_se: report.mean_se,
                    coverage: report.coverage,
                    ci_width: report.ci_width,
                });
            }
        }
        write_csv_json(&self.output_dir, &self.out(""), &rows)?;
        for r in &rows {
            println!(
                "{:<24} n={:<6} R={:<5} bias {:>9.4} sd {:.4} mean_se {:.4} coverage {:.3}",
                r.cell, r.n, r.r, r.bias, r.sd, r.mean_se, r.coverage
            );
        }
        Ok(())
    }

    fn diagnose(&self) -> Result<(), CliError> {
        let panel = self.load_panel()?;
        let a = &self.config.analysis;
        let (_, r_lib) = a.libraries();
        let mut week_rows = Vec::new();
        let mut selections = Vec::new();
        for entry in &self.config.policies {
            let candidates = entry.candidate_policies().expect("validated");
            let specs = self.specs(&panel, &[(entry.index.clone(), entry.policy().expect("validated"))])?;
            let data = GridData::prepare(&panel, &specs);
            let per_week = map_slice(&specs, Execution::Parallel, |spec| {
                let slice = data
                    .slice_frame(spec)
                    .ok()
                    .filter(|s| s.frame.n() >= a.min_slice_size)?;
                let cfg = DiagnoseConfig {
                    v: a.folds,
                    seed: derive_seed_str(self.seed, &format!("diagnose|{}|{}", spec.index, spec.week)),
                    threshold: a.diagnostic_threshold,
                    execution: Execution::Sequential,
                };
                Some((
                    spec.week,
                    slice.frame.n(),
                    diagnose_shift(&slice.frame, &candidates, &r_lib, &cfg),
                ))
            });
            // worst week per candidate, keyed by position in intensity order
            let mut worst: BTreeMap<usize, (ShiftPolicy, f64)> = BTreeMap::new();
            for (week, n, d) in per_week.into_iter().flatten() {
                info!(
                    "diagnosed {} week {}: {} candidates",
                    entry.index,
                    week,
                    d.candidates.len()
                );
                for (k, c) in d.candidates.iter().enumerate() {
                    week_rows.push(DiagnosticRow {
                        index: entry.index.clone(),
                        week_start: panel.window.week_start(week).to_string(),
                        policy_kind: c.policy.kind_label().into(),
                        policy_value: c.policy.value(),
                        n,
                        max_density_ratio: c.max_r,
                        mean_density_ratio: c.mean_r,
                        qualifies: c.qualifies,
                        error: c.error.clone().unwrap_or_default(),
                    });
                    let e = worst.entry(k).or_insert((c.policy, f64::NEG_INFINITY));
                    e.1 = e.1.max(c.max_r);
                }
            }
            if worst.is_empty() {
                warn!("index {}: no slice large enough to diagnose", entry.index);
                continue;
            }
            let chosen = worst.iter().rev().find(|(_, (_, m))| *m < a.diagnostic_threshold);
            let (note, (policy, m)) = match chosen {
                Some((_, v)) => (String::new(), *v),
                None => {
                    let msg = format!("no candidate stays below {} in every week", a.diagnostic_threshold);
                    warn!("index {}: {msg}; selecting the least intense", entry.index);
                    (msg, worst[&0])
                }
            };
            selections.push(SelectionRow {
                index: entry.index.clone(),
                policy_kind: policy.kind_label().into(),
                policy_value: policy.value(),
                worst_max_density_ratio: m,
                note,
            });
        }
        write_csv_json(&self.output_dir, &self.out("_diagnostics"), &week_rows)?;
        write_csv_json(&self.output_dir, &self.out("_selection"), &selections)?;
        for s in &selections {
            println!(
                "{:<16} {} {}  worst max ratio {:.3} {}",
                s.index, s.policy_kind, s.policy_value, s.worst_max_density_ratio, s.note
            );
        }
        Ok(())
    }

    fn screen(&self) -> Result<(), CliError> {
        let panel = self.load_panel()?;
        let a = &self.config.analysis;
        let indices = self.config.schema.as_ref().expect("validated").indices.clone();
        let mut rows = Vec::new();
        for index in &indices {
            let specs = self.specs(&panel, &[(index.clone(), ShiftPolicy::identity())])?;
            let data = GridData::prepare(&panel, &specs);
            let mut listings = Vec::new();
            if a.confounders.per_week() {
                for spec in &specs {
                    let week = panel.window.week_start(spec.week).to_string();
                    listings.push((week, data.screening_for(spec).cloned()));
                }
            } else {
                listings.push(("pooled".to_string(), data.screening_for(&specs[0]).cloned()));
            }
            for (week, result) in listings {
                let Some(result) = result else { continue };
                for (rank, s) in result.scores.iter().enumerate() {
                    rows.push(ScreenRow {
                        index: index.clone(),
                        mode: a.confounders.label().into(),
                        week_start: week.clone(),
                        rank: rank + 1,
                        covariate: s.name.clone(),
                        selected: rank < result.selected.len(),
                        corr_exposure: s.corr_exposure,
                        corr_outcome: s.corr_outcome,
                        rank_exposure: s.rank_exposure,
                        rank_outcome: s.rank_outcome,
                        complete_rows: s.complete,
                    });
                }
                println!("{index} [{week}]: {}", result.selected.join(", "));
            }
        }
        write_csv_json(&self.output_dir, &self.out("_screening"), &rows)
    }
}

#[derive(Serialize)]
struct SimRow {
    cell: String,
    n: usize,
    #[serde(rename = "R")]
    r: usize,
    truth: f64,
    mean_estimate: f64,
    bias: f64,
    sd: f64,
    mean_se: f64,
    coverage: f64,
    ci_width: f64,
}

#[derive(Serialize)]
struct DiagnosticRow {
    index: String,
    week_start: String,
    policy_kind: String,
    policy_value: f64,
    n: usize,
    max_density_ratio: f64,
    mean_density_ratio: f64,
    qualifies: bool,
    error: String,
}

#[derive(Serialize)]
struct SelectionRow {
    index: String,
    policy_kind: String,
    policy_value: f64,
    worst_max_density_ratio: f64,
    note: String,
}

#[derive(Serialize)]
struct ScreenRow {
    index: String,
    mode: String,
    week_start: String,
    rank: usize,
    covariate: String,
    selected: bool,
    corr_exposure: f64,
    corr_outcome: f64,
    rank_exposure: usize,
    rank_outcome: usize,
    complete_rows: usize,
}

/// Write `<base>.csv` and `<base>.json`.
fn write_csv_json<T: Serialize>(dir: &Path, base: &Path, rows: &[T]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(base.with_extension("csv"))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    let file = BufWriter::new(File::create(base.with_extension("json"))?);
    serde_json::to_writer_pretty(file, rows).map_err(|e| CliError::Data(e.to_string()))?;
    Ok(())
}

/// Missing required columns, read from the panel header only.
fn check_header(config: &RunConfig) -> Vec<String> {
    let (Some(path), Some(schema)) = (config.panel_path(), config.schema.as_ref()) else {
        return Vec::new();
    };
    if !path.is_file() || !schema.delimiter.is_ascii() {
        return Vec::new();
    }
    let mut rdr = match csv::ReaderBuilder::new()
        .delimiter(schema.delimiter as u8)
        .from_path(&path)
    {
        Ok(r) => r,
        Err(e) => return vec![format!("cannot read {}: {e}", path.display())],
    };
    let header: Vec<String> = match rdr.headers() {
        Ok(h) => h.iter().map(|s| s.trim().to_string()).collect(),
        Err(e) => return vec![format!("cannot read header of {}: {e}", path.display())],
    };
    schema
        .required_columns()
        .into_iter()
        .filter(|c| !header.iter().any(|h| h == c))
        .map(|c| format!("required column `{c}` not found in {}", path.display()))
        .collect()
}
