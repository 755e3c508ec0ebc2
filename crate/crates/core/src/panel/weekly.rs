//! Weekly binning, outcome leads, lagged case confounders and the
//! population filter.

use std::collections::BTreeMap;

use chrono::{Datelike, Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use super::ingest::{CasesKind, PanelTable};

/// Analysis weeks are Monday-start weeks beginning inside `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl Default for StudyWindow {
    fn default() -> Self {
        StudyWindow {
            start: NaiveDate::from_ymd_opt(2020, 6, 1).expect("valid date"),
            end: NaiveDate::from_ymd_opt(2020, 11, 14).expect("valid date"),
        }
    }
}

impl StudyWindow {
    /// Monday on or before `start`; week 0 begins here.
    pub fn anchor(&self) -> NaiveDate {
        monday_of(self.start)
    }

    pub fn week_of(&self, d: NaiveDate) -> i64 {
        (monday_of(d) - self.anchor()).num_days().div_euclid(7)
    }

    pub fn week_start(&self, week: i64) -> NaiveDate {
        self.anchor() + Duration::days(7 * week)
    }

    /// Weeks overlapping the window.
    pub fn contains_week(&self, week: i64) -> bool {
        let s = self.week_start(week);
        s <= self.end && s + Duration::days(6) >= self.start
    }

    /// Week indices overlapping the window, ascending.
    pub fn weeks(&self) -> std::ops::RangeInclusive<i64> {
        0..=self.week_of(self.end)
    }
}

pub fn monday_of(d: NaiveDate) -> NaiveDate {
    d - Duration::days(i64::from(d.weekday().num_days_from_monday()))
}

/// How daily new cases are aggregated into a week.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseAggregation {
    /// Weekly total of daily new cases.
    #[default]
    Sum,
    /// Simple mean of daily new cases.
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeeklyRecord {
    pub week: i64,
    pub week_start: NaiveDate,
    /// Days contributing any record.
    pub day_count: usize,
    /// Days with a new-case value.
    pub case_days: usize,
    pub new_cases: Option<f64>,
    /// Simple mean per index over days with a value.
    pub indices: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountyInfo {
    pub population: f64,
    pub covariates: Vec<Option<f64>>,
}

/// County-week panel.
#[derive(Debug, Clone, PartialEq)]
pub struct WeeklyPanel {
    pub window: StudyWindow,
    pub index_names: Vec<String>,
    pub covariate_names: Vec<String>,
    pub counties: BTreeMap<String, CountyInfo>,
    pub weeks: BTreeMap<(String, i64), WeeklyRecord>,
    /// Negative day-over-day differences of cumulative counts set to 0.
    pub revisions_floored: usize,
}

impl WeeklyPanel {
    pub fn record(&self, county: &str, week: i64) -> Option<&WeeklyRecord> {
        self.weeks.get(&(county.to_string(), week))
    }

    pub fn index_position(&self, name: &str) -> Option<usize> {
        self.index_names.iter().position(|n| n == name)
    }

    /// All weeks present for any county, ascending.
    pub fn week_range(&self) -> Option<(i64, i64)> {
        let mut it = self.weeks.keys().map(|(_, w)| *w);
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), w| (lo.min(w), hi.max(w))))
    }

    /// Cases per 100,000 residents in `week`.
    pub fn case_rate(&self, county: &str, week: i64) -> Option<f64> {
        let pop = self.counties.get(county)?.population;
        self.record(county, week)?.new_cases.map(|c| 1e5 * c / pop)
    }
}

/// Bin daily records into Monday-start weeks by simple means.
///
/// Cumulative case inputs are differenced per county first; negative
/// revisions are floored at zero and counted. County population and
/// covariates come from the county's earliest record.
pub fn bin_weekly(table: &PanelTable, window: StudyWindow, aggregation: CaseAggregation) -> WeeklyPanel {
    let n_idx = table.index_names.len();
    let mut counties = BTreeMap::new();
    // per (county, week): record, per-index (sum, count), case sum
    type Acc = (WeeklyRecord, Vec<(f64, usize)>, f64);
    let mut weeks: BTreeMap<(String, i64), Acc> = BTreeMap::new();
    let mut revisions = 0;
    let mut prev: Option<(&str, f64)> = None;

    // records are sorted by (county, date)
    for rec in &table.records {
        counties.entry(rec.county.clone()).or_insert_with(|| CountyInfo {
            population: rec.population,
            covariates: rec.covariates.clone(),
        });
        let new_cases = match table.cases_kind {
            CasesKind::Incident => Some(rec.cases),
            CasesKind::Cumulative => {
                let d = match prev {
                    Some((c, last)) if c == rec.county => {
                        let diff = rec.cases - last;
                        if diff < 0.0 {
                            revisions += 1;
                        }
                        Some(diff.max(0.0))
                    }
                    _ => None,
                };
                prev = Some((rec.county.as_str(), rec.cases));
                d
            }
        };
        let week = window.week_of(rec.date);
        let entry = weeks.entry((rec.county.clone(), week)).or_insert_with(|| {
            (
                WeeklyRecord {
                    week,
                    week_start: window.week_start(week),
                    day_count: 0,
                    case_days: 0,
                    new_cases: None,
                    indices: vec![None; n_idx],
                },
                vec![(0.0, 0); n_idx],
                0.0,
            )
        });
        entry.0.day_count += 1;
        if let Some(c) = new_cases {
            entry.0.case_days += 1;
            entry.2 += c;
        }
        for (acc, v) in entry.1.iter_mut().zip(&rec.indices) {
            if let Some(v) = v {
                acc.0 += v;
                acc.1 += 1;
            }
        }
    }

    let weeks = weeks
        .into_iter()
        .map(|(k, (mut rec, sums, case_sum))| {
            rec.indices = sums.iter().map(|&(s, c)| (c > 0).then(|| s / c as f64)).collect();
            rec.new_cases = (rec.case_days > 0).then(|| match aggregation {
                CaseAggregation::Sum => case_sum,
                CaseAggregation::Mean => case_sum / rec.case_days as f64,
            });
            (k, rec)
        })
        .collect();

    WeeklyPanel {
        window,
        index_names: table.index_names.clone(),
        covariate_names: table.covariate_names.clone(),
        counties,
        weeks,
        revisions_floored: revisions,
    }
}

/// `(county, week t) → cases per 100k in week t + lead`. Weeks without a
/// `t + lead` record are absent.
pub fn build_outcome(panel: &WeeklyPanel, lead_weeks: u32) -> BTreeMap<(String, i64), f64> {
    panel
        .weeks
        .keys()
        .filter_map(|(c, w)| {
            panel
                .case_rate(c, w + i64::from(lead_weeks))
                .map(|y| ((c.clone(), *w), y))
        })
        .collect()
}

/// Which week's case rate enters the adjustment set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, PartialOrd, Ord, Hash)]
#[serde(rename_all = "snake_case")]
pub enum LagMode {
    #[default]
    PreviousWeek,
    CurrentWeek,
}

impl LagMode {
    pub fn offset(self) -> i64 {
        match self {
            LagMode::PreviousWeek => 1,
            LagMode::CurrentWeek => 0,
        }
    }
}

/// `(county, week t) → cases per 100k in week t − 1` (or week t).
pub fn build_lagged_confounder(panel: &WeeklyPanel, mode: LagMode) -> BTreeMap<(String, i64), f64> {
    panel
        .weeks
        .keys()
        .filter_map(|(c, w)| panel.case_rate(c, w - mode.offset()).map(|v| ((c.clone(), *w), v)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PopulationFilterSummary {
    pub threshold: f64,
    pub kept: usize,
    pub excluded: usize,
    /// Share of the total population living in retained counties.
    pub kept_population_share: f64,
}

/// Keep counties with population ≥ `threshold`.
pub fn filter_population(panel: &WeeklyPanel, threshold: f64) -> (WeeklyPanel, PopulationFilterSummary) {
    let total: f64 = panel.counties.values().map(|c| c.population).sum();
    let counties: BTreeMap<String, CountyInfo> = panel
        .counties
        .iter()
        .filter(|(_, c)| c.population >= threshold)
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    let kept_pop: f64 = counties.values().map(|c| c.population).sum();
    let weeks = panel
        .weeks
        .iter()
        .filter(|((c, _), _)| counties.contains_key(c))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    let summary = PopulationFilterSummary {
        threshold,
        kept: counties.len(),
        excluded: panel.counties.len() - counties.len(),
        kept_population_share: if total > 0.0 { kept_pop / total } else { 0.0 },
    };
    (
        WeeklyPanel {
            counties,
            weeks,
            ..panel.clone()
        },
        summary,
    )
}
