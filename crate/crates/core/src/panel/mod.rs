//! County panels: ingestion, weekly preprocessing, covariate screening,
//! shift-size diagnostics and the repeated cross-sectional analysis grid.

mod diagnose;
mod grid;
mod ingest;
mod output;
mod screen;
mod weekly;

pub use diagnose::{diagnose_shift, CandidateDiagnostic, DiagnoseConfig, ShiftDiagnosis, DEFAULT_RATIO_THRESHOLD};
pub use grid::*;
pub use ingest::{ingest, ingest_reader, CasesKind, DailyRecord, IngestReport, PanelSchema, PanelTable};
pub use output::*;
pub use screen::{pearson, screen_covariates, ConfounderMode, CovariateScore, ScreeningResult};
pub use weekly::{
    bin_weekly, build_lagged_confounder, build_outcome, filter_population, monday_of, CaseAggregation, CountyInfo,
    LagMode, PopulationFilterSummary, StudyWindow, WeeklyPanel, WeeklyRecord,
};
