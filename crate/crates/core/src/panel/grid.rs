//! The repeated cross-sectional analysis grid over weeks × indices × policies.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use ndarray::Array2;
use serde::Serialize;

use super::screen::{screen_covariates, ConfounderMode, ScreeningResult};
use super::weekly::{build_lagged_confounder, build_outcome, LagMode, WeeklyPanel};
use crate::error::{MtpError, Result};
use crate::estimate::ShiftEstimate;
use crate::frame::AnalysisFrame;
use crate::learners::LearnerSpec;
use crate::par::{map_slice, Execution};
use crate::policy::ShiftPolicy;
use crate::rng::derive_seed_str;
use crate::tmle::{estimate_shift, TmleConfig};

pub const DEFAULT_MIN_SLICE_SIZE: usize = 50;

/// One cross-sectional analysis: week `t`, index `m`, one shift policy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SliceSpec {
    pub week: i64,
    pub index: String,
    pub policy: ShiftPolicy,
    pub lead_weeks: u32,
    pub confounders: ConfounderMode,
    pub lag: LagMode,
}

impl SliceSpec {
    /// Stable key used for the cell seed.
    pub fn key(&self) -> String {
        format!(
            "{}|{}|{}|{}|{}|{}|{:?}",
            self.index,
            self.week,
            self.policy.kind_label(),
            self.policy.value(),
            self.lead_weeks,
            self.confounders.label(),
            self.lag
        )
    }

    pub fn seed(&self, grid_seed: u64) -> u64 {
        derive_seed_str(grid_seed, &self.key())
    }
}

/// Weeks `t` inside the study window with data at `t + lead` and at the
/// lagged week.
pub fn surviving_weeks(panel: &WeeklyPanel, lead_weeks: u32, lag: LagMode) -> Vec<i64> {
    let Some((lo, hi)) = panel.week_range() else {
        return Vec::new();
    };
    panel
        .window
        .weeks()
        .filter(|&t| t - lag.offset() >= lo && t + i64::from(lead_weeks) <= hi)
        .collect()
}

/// Every surviving week for every `(index, policy)` pair, in the given
/// index and policy order.
pub fn build_slice_specs(
    panel: &WeeklyPanel,
    policies: &[(String, ShiftPolicy)],
    lead_weeks: u32,
    confounders: ConfounderMode,
    lag: LagMode,
) -> Result<Vec<SliceSpec>> {
    if lead_weeks < 1 {
        return Err(MtpError::Schema("lead_weeks must be at least 1".into()));
    }
    let weeks = surviving_weeks(panel, lead_weeks, lag);
    let mut specs = Vec::new();
    for (index, policy) in policies {
        if panel.index_position(index).is_none() {
            return Err(MtpError::Schema(format!("unknown mobility index `{index}`")));
        }
        for &week in &weeks {
            specs.push(SliceSpec {
                week,
                index: index.clone(),
                policy: *policy,
                lead_weeks,
                confounders,
                lag,
            });
        }
    }
    Ok(specs)
}

#[derive(Debug, Clone)]
pub struct GridConfig {
    pub outcome_library: Vec<LearnerSpec>,
    pub ratio_library: Vec<LearnerSpec>,
    pub v: usize,
    pub seed: u64,
    pub min_slice_size: usize,
    pub ratio_truncation: Option<f64>,
    pub outcome_bounds: Option<(f64, f64)>,
    /// Scheduling of cells; each cell runs sequentially inside.
    pub execution: Execution,
}

impl GridConfig {
    pub fn new(outcome_library: Vec<LearnerSpec>, ratio_library: Vec<LearnerSpec>, v: usize, seed: u64) -> Self {
        GridConfig {
            outcome_library,
            ratio_library,
            v,
            seed,
            min_slice_size: DEFAULT_MIN_SLICE_SIZE,
            ratio_truncation: None,
            outcome_bounds: None,
            execution: Execution::default(),
        }
    }

    pub fn tmle_config(&self, seed: u64) -> TmleConfig {
        TmleConfig {
            outcome_library: self.outcome_library.clone(),
            ratio_library: self.ratio_library.clone(),
            v: self.v,
            seed,
            ratio_truncation: self.ratio_truncation,
            outcome_bounds: self.outcome_bounds,
            execution: Execution::Sequential,
        }
    }
}

/// A slice's complete-case frame with its adjustment set.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceFrame {
    pub frame: AnalysisFrame,
    /// Counties dropped for missing exposure, outcome or adjustment values.
    pub dropped_rows: usize,
    pub screened: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridResult {
    pub spec: SliceSpec,
    pub week_start: NaiveDate,
    pub n: usize,
    pub dropped_rows: usize,
    pub screened: Vec<String>,
    pub adjusted: ShiftEstimate,
    pub unadjusted: ShiftEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedSlice {
    pub spec: SliceSpec,
    pub reason: String,
    /// Whether the skip came from a failed estimate rather than too few rows.
    pub estimation_error: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct GridOutput {
    /// In slice-spec order.
    pub results: Vec<GridResult>,
    pub skipped: Vec<SkippedSlice>,
}

/// Column name of the case-rate confounder.
pub fn case_column(lag: LagMode) -> &'static str {
    match lag {
        LagMode::PreviousWeek => "lagged_case_rate",
        LagMode::CurrentWeek => "current_case_rate",
    }
}

type ScreenKey = (String, u32, ConfounderMode, Option<i64>);

/// Preprocessed panel ready for slicing: outcomes and case confounders per
/// lead/lag, and cached screening results.
pub struct GridData<'a> {
    panel: &'a WeeklyPanel,
    outcomes: BTreeMap<u32, BTreeMap<(String, i64), f64>>,
    lags: BTreeMap<LagMode, BTreeMap<(String, i64), f64>>,
    screens: BTreeMap<ScreenKey, ScreeningResult>,
}

impl<'a> GridData<'a> {
    /// Build outcomes, lags and every screening result the specs need.
    /// Pooled screening stacks the rows of all weeks the specs use for
    /// that index.
    pub fn prepare(panel: &'a WeeklyPanel, specs: &[SliceSpec]) -> Self {
        let mut data = GridData {
            panel,
            outcomes: BTreeMap::new(),
            lags: BTreeMap::new(),
            screens: BTreeMap::new(),
        };
        for s in specs {
            data.outcomes
                .entry(s.lead_weeks)
                .or_insert_with(|| build_outcome(panel, s.lead_weeks));
            data.lags
                .entry(s.lag)
                .or_insert_with(|| build_lagged_confounder(panel, s.lag));
        }
        let mut groups: BTreeMap<ScreenKey, BTreeSet<i64>> = BTreeMap::new();
        for s in specs {
            let week = s.confounders.per_week().then_some(s.week);
            groups
                .entry((s.index.clone(), s.lead_weeks, s.confounders, week))
                .or_default()
                .insert(s.week);
        }
        for (key, weeks) in groups {
            let result = data.screen(&key.0, key.1, key.2.top_k(), &weeks);
            data.screens.insert(key, result);
        }
        data
    }

    /// Screen county covariates for `index` on rows stacked over `weeks`.
    pub fn screen(&self, index: &str, lead_weeks: u32, top_k: usize, weeks: &BTreeSet<i64>) -> ScreeningResult {
        let panel = self.panel;
        let m = panel.index_position(index).expect("index validated with specs");
        let outcome = self
            .outcomes
            .get(&lead_weeks)
            .cloned()
            .unwrap_or_else(|| build_outcome(panel, lead_weeks));
        let p = panel.covariate_names.len();
        let mut columns = vec![Vec::new(); p];
        let (mut a, mut y) = (Vec::new(), Vec::new());
        for &t in weeks {
            for (county, info) in &panel.counties {
                let key = (county.clone(), t);
                a.push(panel.weeks.get(&key).and_then(|r| r.indices[m]));
                y.push(outcome.get(&key).copied());
                for (col, v) in columns.iter_mut().zip(&info.covariates) {
                    col.push(*v);
                }
            }
        }
        screen_covariates(&panel.covariate_names, &columns, &a, &y, top_k)
    }

    pub fn screening_for(&self, spec: &SliceSpec) -> Option<&ScreeningResult> {
        let week = spec.confounders.per_week().then_some(spec.week);
        self.screens
            .get(&(spec.index.clone(), spec.lead_weeks, spec.confounders, week))
    }

    /// Complete-case frame for one slice: units are counties in id order,
    /// covariates are the screened names followed by the case-rate column.
    pub fn slice_frame(&self, spec: &SliceSpec) -> Result<SliceFrame> {
        let panel = self.panel;
        let m = panel
            .index_position(&spec.index)
            .ok_or_else(|| MtpError::Schema(format!("unknown mobility index `{}`", spec.index)))?;
        let screened = self.screening_for(spec).map(|s| s.selected.clone()).unwrap_or_default();
        let cov_pos: Vec<usize> = screened
            .iter()
            .map(|n| {
                panel
                    .covariate_names
                    .iter()
                    .position(|c| c == n)
                    .expect("screened from panel")
            })
            .collect();
        let outcome = &self.outcomes[&spec.lead_weeks];
        let lag = &self.lags[&spec.lag];

        let mut ids = Vec::new();
        let mut rows: Vec<f64> = Vec::new();
        let (mut a, mut y) = (Vec::new(), Vec::new());
        let mut dropped = 0;
        for (county, info) in &panel.counties {
            let key = (county.clone(), spec.week);
            let ai = panel.weeks.get(&key).and_then(|r| r.indices[m]);
            let yi = outcome.get(&key).copied();
            let li = lag.get(&key).copied();
            let wi: Option<Vec<f64>> = cov_pos.iter().map(|&j| info.covariates[j]).collect();
            match (ai, yi, li, wi) {
                (Some(ai), Some(yi), Some(li), Some(mut wi)) => {
                    wi.push(li);
                    rows.extend(wi);
                    a.push(ai);
                    y.push(yi);
                    ids.push(county.clone());
                }
                _ => dropped += 1,
            }
        }
        let mut names = screened.clone();
        names.push(case_column(spec.lag).to_string());
        let n = ids.len();
        if n < 2 {
            return Err(MtpError::Data(format!("slice {} has {n} complete rows", spec.key())));
        }
        let w = Array2::from_shape_vec((n, names.len()), rows)
            .map_err(|e| MtpError::Data(format!("covariate matrix: {e}")))?;
        Ok(SliceFrame {
            frame: AnalysisFrame::new(ids, names, w, a, y)?,
            dropped_rows: dropped,
            screened,
        })
    }

    fn run_cell(&self, spec: &SliceSpec, config: &GridConfig) -> std::result::Result<GridResult, SkippedSlice> {
        let skip = |reason: String, estimation_error: bool| SkippedSlice {
            spec: spec.clone(),
            reason,
            estimation_error,
        };
        let slice = match self.slice_frame(spec) {
            Ok(s) => s,
            Err(e) => return Err(skip(e.to_string(), false)),
        };
        let n = slice.frame.n();
        if n < config.min_slice_size {
            return Err(skip(
                format!("{n} complete rows, below the minimum of {}", config.min_slice_size),
                false,
            ));
        }
        let tmle = config.tmle_config(spec.seed(config.seed));
        let adjusted = estimate_shift(&slice.frame, &spec.policy, &tmle);
        let unadjusted = estimate_shift(&slice.frame.unadjusted(), &spec.policy, &tmle);
        match (adjusted, unadjusted) {
            (Ok(adjusted), Ok(unadjusted)) => {
                log::info!(
                    "slice {} n={} adjusted {:.3} unadjusted {:.3}",
                    spec.key(),
                    n,
                    adjusted.psi_delta,
                    unadjusted.psi_delta
                );
                Ok(GridResult {
                    spec: spec.clone(),
                    week_start: self.panel.window.week_start(spec.week),
                    n,
                    dropped_rows: slice.dropped_rows,
                    screened: slice.screened,
                    adjusted,
                    unadjusted,
                })
            }
            (Err(e), _) => Err(skip(format!("adjusted estimate failed: {e}"), true)),
            (_, Err(e)) => Err(skip(format!("unadjusted estimate failed: {e}"), true)),
        }
    }
}

/// Run adjusted and unadjusted estimates for every slice. Cells are
/// independent; output order follows `specs`.
pub fn run_grid(panel: &WeeklyPanel, specs: &[SliceSpec], config: &GridConfig) -> GridOutput {
    let data = GridData::prepare(panel, specs);
    let cells = map_slice(specs, config.execution, |spec| data.run_cell(spec, config));
    let mut out = GridOutput::default();
    for cell in cells {
        match cell {
            Ok(r) => out.results.push(r),
            Err(s) => {
                log::warn!("skipped slice {}: {}", s.spec.key(), s.reason);
                out.skipped.push(s);
            }
        }
    }
    out
}
