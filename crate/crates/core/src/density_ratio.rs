//! Density ratio `r(a, w) = g_shift(a | w) / g(a | w)` by classification.
//!
//! Each unit contributes two rows with identical covariates: its natural
//! exposure labelled 0 and its shifted exposure labelled 1. With balanced
//! labels, the odds `λ / (1 − λ)` of the fitted classifier at `(a, w)`
//! equal the density ratio there.

use ndarray::{Array2, Axis};

use crate::error::{MtpError, Result};
use crate::frame::AnalysisFrame;
use crate::learners::{LearnerSpec, Task, PROB_CLIP};
use crate::par::Execution;
use crate::policy::{shift_frame, ShiftPolicy};
use crate::super_learner::{ensemble_predict, fit_super_learner, EnsembleSummary, SuperLearnerConfig};

/// Natural and shifted copies of every unit, interleaved: row `2i` is unit
/// `i` at its natural exposure, row `2i + 1` at its shifted exposure.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationStack {
    /// `[a | W]` per row.
    pub features: Array2<f64>,
    /// 0 natural, 1 shifted.
    pub labels: Vec<f64>,
    /// Originating unit per row.
    pub units: Vec<usize>,
    pub truncated_shift_count: usize,
}

pub fn build_stack(frame: &AnalysisFrame, policy: &ShiftPolicy) -> ClassificationStack {
    let shifted = shift_frame(frame, policy);
    let natural = frame.features_with(frame.exposure());
    let moved = frame.features_with(&shifted.values);
    let n = frame.n();
    let mut features = Array2::zeros((2 * n, natural.ncols()));
    for i in 0..n {
        features.row_mut(2 * i).assign(&natural.row(i));
        features.row_mut(2 * i + 1).assign(&moved.row(i));
    }
    ClassificationStack {
        features,
        labels: (0..2 * n).map(|r| (r % 2) as f64).collect(),
        units: (0..2 * n).map(|r| r / 2).collect(),
        truncated_shift_count: shifted.truncated,
    }
}

impl ClassificationStack {
    /// The same stack with labels swapped (shifted ↔ natural).
    pub fn swapped(&self) -> Self {
        ClassificationStack {
            labels: self.labels.iter().map(|l| 1.0 - l).collect(),
            ..self.clone()
        }
    }

    /// True when every shifted row equals its natural row.
    pub fn halves_identical(&self) -> bool {
        self.features
            .axis_chunks_iter(Axis(0), 2)
            .all(|pair| pair.row(0) == pair.row(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityRatioConfig {
    pub v: usize,
    pub seed: u64,
    /// Optional cap applied to `r` after diagnostics are computed.
    pub truncation: Option<f64>,
    pub execution: Execution,
}

impl DensityRatioConfig {
    pub fn new(v: usize, seed: u64) -> Self {
        DensityRatioConfig {
            v,
            seed,
            truncation: None,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityRatioEstimate {
    /// Ratio at each unit's observed `(a, w)`.
    pub r: Vec<f64>,
    /// Classifier probability of "shifted" at each unit's observed `(a, w)`.
    pub lambda_hat: Vec<f64>,
    /// Before truncation.
    pub max_r: f64,
    /// Before truncation.
    pub mean_r: f64,
    pub truncation_bound: Option<f64>,
    /// Units capped by `truncation_bound`.
    pub capped: usize,
    pub truncated_shift_count: usize,
    /// `None` when the ratio is known exactly (identity shift).
    pub ensemble: Option<EnsembleSummary>,
}

/// Fit the classifier Super Learner on the stack and evaluate the odds at
/// the natural rows. Cross-validation folds are drawn over units, so both
/// copies of a unit always share a fold.
pub fn estimate_density_ratio(
    frame: &AnalysisFrame,
    policy: &ShiftPolicy,
    library: &[LearnerSpec],
    config: &DensityRatioConfig,
) -> Result<DensityRatioEstimate> {
    let stack = build_stack(frame, policy);
    estimate_from_stack(&stack, library, config)
}

pub fn estimate_from_stack(
    stack: &ClassificationStack,
    library: &[LearnerSpec],
    config: &DensityRatioConfig,
) -> Result<DensityRatioEstimate> {
    if let Some(b) = config.truncation {
        if !(b > 0.0 && b.is_finite()) {
            return Err(MtpError::InvalidPolicy(format!(
                "truncation bound must be positive, got {b}"
            )));
        }
    }
    let n = stack.labels.len() / 2;
    let natural = stack.features.slice(ndarray::s![..;2, ..]).to_owned();

    // Identical halves: the two label classes share one distribution, so
    // the ratio is exactly 1 and the classification problem carries no signal.
    let (lambda_hat, ensemble) = if stack.halves_identical() {
        (vec![0.5; n], None)
    } else {
        let sl = SuperLearnerConfig {
            task: Task::BinaryProbability,
            v: config.v,
            seed: config.seed,
            execution: config.execution,
        };
        let model = fit_super_learner(
            stack.features.view(),
            &stack.labels,
            None,
            library,
            &sl,
            Some(&stack.units),
        )?;
        (
            ensemble_predict(&model, natural.view())?,
            Some(EnsembleSummary::from(&model)),
        )
    };

    let clipped = lambda_hat
        .iter()
        .filter(|&&l| l <= PROB_CLIP * (1.0 + 1e-9) || l >= 1.0 - PROB_CLIP * (1.0 + 1e-9))
        .count();
    if 2 * clipped > n {
        return Err(MtpError::PositivityViolation { clipped, n });
    }

    let mut r: Vec<f64> = lambda_hat.iter().map(|l| l / (1.0 - l)).collect();
    let max_r = r.iter().copied().fold(0.0, f64::max);
    let mean_r = r.iter().sum::<f64>() / n as f64;
    let mut capped = 0;
    if let Some(b) = config.truncation {
        for v in r.iter_mut() {
            if *v > b {
                *v = b;
                capped += 1;
            }
        }
    }
    Ok(DensityRatioEstimate {
        r,
        lambda_hat,
        max_r,
        mean_r,
        truncation_bound: config.truncation,
        capped,
        truncated_shift_count: stack.truncated_shift_count,
        ensemble,
    })
}
