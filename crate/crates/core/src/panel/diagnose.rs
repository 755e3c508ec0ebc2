//! Shift-size selection from the estimated density ratio.

use serde::Serialize;

use crate::density_ratio::{estimate_density_ratio, DensityRatioConfig};
use crate::frame::AnalysisFrame;
use crate::learners::LearnerSpec;
use crate::par::{map_slice, Execution};
use crate::policy::ShiftPolicy;
use crate::rng::derive_seed;

/// Candidates qualify when their largest estimated ratio stays below this.
pub const DEFAULT_RATIO_THRESHOLD: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateDiagnostic {
    pub policy: ShiftPolicy,
    pub intensity: f64,
    /// `+∞` when the ratio could not be estimated.
    pub max_r: f64,
    pub mean_r: f64,
    pub truncated_shift_count: usize,
    pub qualifies: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftDiagnosis {
    /// Candidates sorted by increasing intensity.
    pub candidates: Vec<CandidateDiagnostic>,
    /// Position in `candidates` of the selected policy.
    pub selected: usize,
    pub threshold: f64,
    pub warning: Option<String>,
}

impl ShiftDiagnosis {
    pub fn selected_policy(&self) -> &ShiftPolicy {
        &self.candidates[self.selected].policy
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnoseConfig {
    pub v: usize,
    pub seed: u64,
    pub threshold: f64,
    pub execution: Execution,
}

impl DiagnoseConfig {
    pub fn new(v: usize, seed: u64) -> Self {
        DiagnoseConfig {
            v,
            seed,
            threshold: DEFAULT_RATIO_THRESHOLD,
            execution: Execution::default(),
        }
    }
}

/// Estimate the density ratio for every candidate and select the most
/// intense one whose max `r̂` is below the threshold. When none qualifies
/// the least intense candidate is returned with a warning.
///
/// Each candidate's classifier seed is derived from its position in the
/// intensity order, so the result does not depend on input order.
///
/// # Panics
/// If `candidates` is empty.
pub fn diagnose_shift(
    frame: &AnalysisFrame,
    candidates: &[ShiftPolicy],
    ratio_library: &[LearnerSpec],
    config: &DiagnoseConfig,
) -> ShiftDiagnosis {
    assert!(!candidates.is_empty(), "diagnose_shift needs at least one candidate");
    let mut sorted: Vec<ShiftPolicy> = candidates.to_vec();
    sorted.sort_by(|a, b| a.intensity().total_cmp(&b.intensity()));
    let indexed: Vec<(usize, ShiftPolicy)> = sorted.into_iter().enumerate().collect();

    let rows = map_slice(&indexed, config.execution, |&(k, policy)| {
        let cfg = DensityRatioConfig {
            v: config.v,
            seed: derive_seed(config.seed, k as u64),
            truncation: None,
            execution: Execution::Sequential,
        };
        match estimate_density_ratio(frame, &policy, ratio_library, &cfg) {
            Ok(est) => CandidateDiagnostic {
                policy,
                intensity: policy.intensity(),
                max_r: est.max_r,
                mean_r: est.mean_r,
                truncated_shift_count: est.truncated_shift_count,
                qualifies: est.max_r < config.threshold,
                error: None,
            },
            Err(e) => CandidateDiagnostic {
                policy,
                intensity: policy.intensity(),
                max_r: f64::INFINITY,
                mean_r: f64::NAN,
                truncated_shift_count: 0,
                qualifies: false,
                error: Some(e.to_string()),
            },
        }
    });

    let (selected, warning) = match rows.iter().rposition(|r| r.qualifies) {
        Some(k) => (k, None),
        None => {
            let msg = format!(
                "no candidate shift has max density ratio below {}; using the least intense",
                config.threshold
            );
            log::warn!("{msg}");
            (0, Some(msg))
        }
    };
    ShiftDiagnosis {
        candidates: rows,
        selected,
        threshold: config.threshold,
        warning,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::LearnerSpec;
    use ndarray::Array2;

    fn gaussian_frame(n: usize, seed: u64) -> AnalysisFrame {
        let a = crate::sim::standard_normal_vec(n, seed);
        let y = a.clone();
        AnalysisFrame::from_arrays(Array2::zeros((n, 0)), a, y).unwrap()
    }

    #[test]
    fn identity_always_qualifies() {
        let frame = gaussian_frame(200, 3);
        let lib = vec![LearnerSpec::glm()];
        let d = diagnose_shift(&frame, &[ShiftPolicy::identity()], &lib, &DiagnoseConfig::new(3, 1));
        assert_eq!(d.candidates[0].max_r, 1.0);
        assert_eq!(d.selected, 0);
        assert!(d.warning.is_none());
    }

    #[test]
    fn candidates_sorted_and_none_qualifying_warns() {
        let frame = gaussian_frame(300, 4);
        let lib = vec![LearnerSpec::glm()];
        let cands = [ShiftPolicy::additive(3.0).unwrap(), ShiftPolicy::additive(0.2).unwrap()];
        let mut cfg = DiagnoseConfig::new(3, 1);
        cfg.threshold = 1.0;
        let d = diagnose_shift(&frame, &cands, &lib, &cfg);
        assert!(d.candidates[0].intensity < d.candidates[1].intensity);
        assert_eq!(d.selected, 0);
        assert!(d.warning.is_some());
    }
}
