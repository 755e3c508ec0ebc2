//! Versioned TOML run configuration.
//!
//! Relative paths are resolved against the directory holding the config
//! file. Unknown keys are rejected by the parser; every semantic problem
//! is collected by [`RunConfig::validate`].

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Deserialize;

use mtp_core::learners::{default_library, validate_library, LearnerSpec};
use mtp_core::panel::{
    CaseAggregation, ConfounderMode, LagMode, PanelSchema, StudyWindow, DEFAULT_MIN_SLICE_SIZE, DEFAULT_RATIO_THRESHOLD,
};
use mtp_core::policy::{ShiftKind, ShiftPolicy};
use mtp_core::sim::DgpSpec;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Analyze,
    Simulate,
    DiagnoseShift,
    Screen,
}

impl Command {
    fn needs_panel(self) -> bool {
        !matches!(self, Command::Simulate)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub seed: Option<u64>,
    pub input: Option<InputConfig>,
    pub schema: Option<PanelSchema>,
    #[serde(default)]
    pub window: WindowConfig,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub policies: Vec<PolicyEntry>,
    #[serde(default)]
    pub output: OutputConfig,
    pub simulate: Option<SimulateConfig>,
    /// Directory of the config file; not read from TOML.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub panel: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl Default for WindowConfig {
    fn default() -> Self {
        let w = StudyWindow::default();
        WindowConfig {
            start: w.start,
            end: w.end,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub population_threshold: f64,
    pub case_aggregation: CaseAggregation,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            population_threshold: 40_000.0,
            case_aggregation: CaseAggregation::Sum,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub lead_weeks: u32,
    pub confounders: ConfounderMode,
    pub lag: LagMode,
    pub folds: usize,
    pub min_slice_size: usize,
    pub ratio_truncation: Option<f64>,
    pub outcome_bounds: Option<[f64; 2]>,
    /// Drop boosting and random-forest candidates from both libraries.
    pub exclude_tree_learners: bool,
    pub diagnostic_threshold: f64,
    pub outcome_library: Vec<LearnerSpec>,
    pub ratio_library: Vec<LearnerSpec>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            lead_weeks: 2,
            confounders: ConfounderMode::PooledTop8,
            lag: LagMode::PreviousWeek,
            folds: 5,
            min_slice_size: DEFAULT_MIN_SLICE_SIZE,
            ratio_truncation: None,
            outcome_bounds: None,
            exclude_tree_learners: false,
            diagnostic_threshold: DEFAULT_RATIO_THRESHOLD,
            outcome_library: default_library(),
            ratio_library: default_library(),
        }
    }
}

impl AnalysisConfig {
    pub fn libraries(&self) -> (Vec<LearnerSpec>, Vec<LearnerSpec>) {
        let keep = |lib: &[LearnerSpec]| -> Vec<LearnerSpec> {
            lib.iter()
                .filter(|l| !(self.exclude_tree_learners && l.family.is_tree_based()))
                .cloned()
                .collect()
        };
        (keep(&self.outcome_library), keep(&self.ratio_library))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftEntry {
    pub kind: String,
    pub value: f64,
}

impl ShiftEntry {
    pub fn to_policy(&self) -> Result<ShiftPolicy, String> {
        self.policy(None, None)
    }

    fn policy(&self, clamp_lo: Option<f64>, clamp_hi: Option<f64>) -> Result<ShiftPolicy, String> {
        let kind = match self.kind.as_str() {
            "additive" => ShiftKind::Additive(self.value),
            "multiplicative" => ShiftKind::Multiplicative(self.value),
            other => {
                return Err(format!(
                    "unknown shift kind `{other}` (expected additive or multiplicative)"
                ))
            }
        };
        ShiftPolicy::new(kind, clamp_lo, clamp_hi).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyEntry {
    pub index: String,
    pub kind: String,
    pub value: f64,
    pub clamp_lo: Option<f64>,
    pub clamp_hi: Option<f64>,
    /// Shift sizes compared by `diagnose-shift`.
    #[serde(default)]
    pub candidates: Vec<ShiftEntry>,
}

impl PolicyEntry {
    pub fn policy(&self) -> Result<ShiftPolicy, String> {
        ShiftEntry {
            kind: self.kind.clone(),
            value: self.value,
        }
        .policy(self.clamp_lo, self.clamp_hi)
    }

    pub fn candidate_policies(&self) -> Result<Vec<ShiftPolicy>, String> {
        self.candidates
            .iter()
            .map(|c| c.policy(self.clamp_lo, self.clamp_hi))
            .collect()
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub stem: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("results"),
            stem: "results".into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default)]
    pub dgp: DgpSpec,
    pub policy: ShiftEntry,
    pub n: usize,
    pub replications: usize,
    #[serde(default = "default_folds")]
    pub folds: usize,
    /// Known true difference; computed by Monte Carlo when absent.
    pub truth: Option<f64>,
    #[serde(default = "default_truth_mc")]
    pub truth_mc: usize,
    pub cells: Vec<SimCell>,
}

fn default_folds() -> usize {
    5
}

fn default_truth_mc() -> usize {
    1_000_000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimCell {
    pub name: String,
    /// Overrides the study-wide sample sizes.
    pub n: Option<Vec<usize>>,
    pub outcome_library: Vec<LearnerSpec>,
    pub ratio_library: Vec<LearnerSpec>,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, Vec<String>> {
        let text =
            std::fs::read_to_string(path).map_err(|e| vec![format!("cannot read config {}: {e}", path.display())])?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| vec![format!("{}: {e}", path.display())])?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn panel_path(&self) -> Option<PathBuf> {
        self.input.as_ref().map(|i| self.resolve(&i.panel))
    }

    pub fn window(&self) -> StudyWindow {
        StudyWindow {
            start: self.window.start,
            end: self.window.end,
        }
    }

    /// Every problem that would stop `command`, in config order.
    pub fn validate(&self, command: Command, seed_override: Option<u64>) -> Vec<String> {
        let mut p = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            p.push(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.seed.is_none() && seed_override.is_none() {
            p.push("seed is required (set `seed` or pass --seed)".into());
        }
        match command {
            Command::Simulate => self.validate_simulate(&mut p),
            _ => self.validate_panel(command, &mut p),
        }
        p
    }

    fn validate_panel(&self, command: Command, p: &mut Vec<String>) {
        debug_assert!(command.needs_panel());
        match self.panel_path() {
            None => p.push("[input] panel path is required".into()),
            Some(path) if !path.is_file() => p.push(format!("input panel {} does not exist", path.display())),
            Some(_) => {}
        }
        let indices: Vec<String> = match &self.schema {
            None => {
                p.push("[schema] section is required".into());
                Vec::new()
            }
            Some(s) => {
                if s.indices.is_empty() {
                    p.push("schema.indices must list at least one mobility index".into());
                }
                if !s.delimiter.is_ascii() {
                    p.push(format!("schema.delimiter {:?} must be ASCII", s.delimiter));
                }
                s.indices.clone()
            }
        };
        if self.window.start > self.window.end {
            p.push(format!(
                "window.start {} is after window.end {}",
                self.window.start, self.window.end
            ));
        }
        let pre = &self.preprocess;
        if !(pre.population_threshold >= 0.0 && pre.population_threshold.is_finite()) {
            p.push(format!(
                "preprocess.population_threshold must be ≥ 0, got {}",
                pre.population_threshold
            ));
        }
        let a = &self.analysis;
        if a.lead_weeks < 1 {
            p.push("analysis.lead_weeks must be at least 1".into());
        }
        if a.folds < 2 {
            p.push(format!("analysis.folds must be at least 2, got {}", a.folds));
        }
        if a.min_slice_size < 2 {
            p.push(format!(
                "analysis.min_slice_size must be at least 2, got {}",
                a.min_slice_size
            ));
        }
        if let Some(t) = a.ratio_truncation {
            if !(t > 0.0 && t.is_finite()) {
                p.push(format!("analysis.ratio_truncation must be positive, got {t}"));
            }
        }
        if let Some([lo, hi]) = a.outcome_bounds {
            if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                p.push(format!(
                    "analysis.outcome_bounds must satisfy lo < hi, got [{lo}, {hi}]"
                ));
            }
        }
        if !(a.diagnostic_threshold > 0.0) {
            p.push(format!(
                "analysis.diagnostic_threshold must be positive, got {}",
                a.diagnostic_threshold
            ));
        }
        let (q_lib, r_lib) = a.libraries();
        check_library("analysis.outcome_library", &q_lib, p);
        check_library("analysis.ratio_library", &r_lib, p);

        if self.policies.is_empty() {
            p.push("at least one [[policies]] entry is required".into());
        }
        for (k, e) in self.policies.iter().enumerate() {
            let at = format!("policies[{k}] ({})", e.index);
            if !indices.is_empty() && !indices.contains(&e.index) {
                p.push(format!("{at}: index is not listed in schema.indices"));
            }
            if let Err(msg) = e.policy() {
                p.push(format!("{at}: {msg}"));
            }
            if let Err(msg) = e.candidate_policies() {
                p.push(format!("{at}: candidate {msg}"));
            }
            if command == Command::DiagnoseShift && e.candidates.is_empty() {
                p.push(format!("{at}: diagnose-shift needs a non-empty `candidates` list"));
            }
        }
        if self.output.stem.is_empty() {
            p.push("output.stem must not be empty".into());
        }
    }

    fn validate_simulate(&self, p: &mut Vec<String>) {
        let Some(s) = &self.simulate else {
            p.push("[simulate] section is required".into());
            return;
        };
        if let Err(e) = s.dgp.validate() {
            p.push(format!("simulate.dgp: {e}"));
        }
        if let Err(msg) = s.policy.policy(None, None) {
            p.push(format!("simulate.policy: {msg}"));
        }
        if s.n < 2 {
            p.push(format!("simulate.n must be at least 2, got {}", s.n));
        }
        if s.replications < 2 {
            p.push(format!(
                "simulate.replications must be at least 2, got {}",
                s.replications
            ));
        }
        if s.folds < 2 {
            p.push(format!("simulate.folds must be at least 2, got {}", s.folds));
        }
        if s.truth.is_none() && s.truth_mc < 1000 {
            p.push(format!("simulate.truth_mc must be at least 1000, got {}", s.truth_mc));
        }
        if s.cells.is_empty() {
            p.push("at least one [[simulate.cells]] entry is required".into());
        }
        for (k, c) in s.cells.iter().enumerate() {
            check_library(
                &format!("simulate.cells[{k}] ({}) outcome_library", c.name),
                &c.outcome_library,
                p,
            );
            check_library(
                &format!("simulate.cells[{k}] ({}) ratio_library", c.name),
                &c.ratio_library,
                p,
            );
            if let Some(ns) = &c.n {
                if ns.is_empty() || ns.iter().any(|&n| n < 2) {
                    p.push(format!("simulate.cells[{k}] ({}): every n must be at least 2", c.name));
                }
            }
        }
    }
}

fn check_library(label: &str, lib: &[LearnerSpec], p: &mut Vec<String>) {
    if lib.is_empty() {
        p.push(format!("{label} is empty"));
        return;
    }
    if let Err(e) = validate_library(lib) {
        p.push(format!("{label}: {e}"));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, toml::de::Error> {
        toml::from_str(text)
    }

    const MINIMAL: &str = r#"
schema_version = 1
seed = 1

[input]
panel = "missing.csv"

[schema]
county_id = "fips"
date = "date"
population = "pop"
cases = "cases"
indices = ["m50"]

[[policies]]
index = "m50"
kind = "multiplicative"
value = 0.8
"#;

    #[test]
    fn learner_specs_parse_with_params() {
        let text = format!(
            "{MINIMAL}\n[analysis]\nfolds = 3\noutcome_library = [{{ name = \"g\", family = \"glm\", ridge = 0.5 }}, {{ name = \"m\", family = \"mean\" }}]\n"
        );
        let cfg = parse(&text).unwrap();
        assert_eq!(cfg.analysis.outcome_library.len(), 2);
        assert_eq!(cfg.analysis.folds, 3);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(parse(&format!("{MINIMAL}\ncolour = 1\n")).is_err());
        let bad_param =
            format!("{MINIMAL}\n[analysis]\noutcome_library = [{{ name = \"g\", family = \"glm\", ridgee = 0.5 }}]\n");
        assert!(parse(&bad_param).is_err());
    }

    #[test]
    fn validation_lists_every_problem() {
        let text = MINIMAL
            .replace("schema_version = 1", "schema_version = 9")
            .replace("seed = 1\n", "")
            .replace("value = 0.8", "value = -2");
        let cfg = parse(&text).unwrap();
        let problems = cfg.validate(Command::Analyze, None);
        assert!(problems.len() >= 4, "{problems:?}");
        assert!(problems.iter().any(|m| m.contains("schema_version")));
        assert!(problems.iter().any(|m| m.contains("seed")));
        assert!(problems.iter().any(|m| m.contains("missing.csv")));
        assert!(problems.iter().any(|m| m.contains("policies[0]")));
        assert!(cfg
            .validate(Command::Analyze, Some(3))
            .iter()
            .all(|m| !m.contains("seed")));
    }

    #[test]
    fn tree_learners_can_be_excluded() {
        let a = AnalysisConfig {
            exclude_tree_learners: true,
            ..Default::default()
        };
        let (q, _) = a.libraries();
        assert!(q.iter().all(|l| !l.family.is_tree_based()));
        assert!(!q.is_empty());
    }
}
