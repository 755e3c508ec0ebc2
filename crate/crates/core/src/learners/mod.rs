//! Candidate learners with a uniform fit/predict contract.
//!
//! Every family fits both tasks unless noted: regression minimizes weighted
//! squared error, binary probability minimizes weighted log-loss. Randomized
//! families (forest, subsampled boosting) draw only from the seed passed to
//! [`fit`].

mod boost;
mod forest;
mod gam;
mod glm;
mod tree;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{MtpError, Result};

pub use boost::{BoostParams, BoostedTrees};
pub use forest::{ForestParams, RandomForest};
pub use gam::{GamParams, SplineAdditiveModel};
pub use glm::{fit_logistic_irls, GlmParams, IrlsFit, LinearModel};
pub use tree::{RegressionTree, TreeParams};

/// Predicted probabilities are clipped to `[PROB_CLIP, 1 - PROB_CLIP]`.
pub const PROB_CLIP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    BinaryProbability,
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Task::Regression => f.write_str("regression"),
            Task::BinaryProbability => f.write_str("binary_probability"),
        }
    }
}

/// Algorithm family and its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Family {
    /// Weighted mean of the target (constant-probability classifier for
    /// the binary task).
    Mean,
    /// Identity link for regression, logit link (IRLS) for probabilities.
    Glm(GlmParams),
    Gam(GamParams),
    Boosting(BoostParams),
    RandomForest(ForestParams),
}

impl Family {
    pub fn is_tree_based(&self) -> bool {
        matches!(self, Family::Boosting(_) | Family::RandomForest(_))
    }

    pub fn label(&self) -> &'static str {
        match self {
            Family::Mean => "mean",
            Family::Glm(_) => "glm",
            Family::Gam(_) => "gam",
            Family::Boosting(_) => "boosting",
            Family::RandomForest(_) => "random_forest",
        }
    }
}

/// A named library entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub name: String,
    #[serde(flatten)]
    pub family: Family,
}

impl LearnerSpec {
    pub fn new(name: impl Into<String>, family: Family) -> Self {
        LearnerSpec {
            name: name.into(),
            family,
        }
    }

    pub fn mean() -> Self {
        Self::new("mean", Family::Mean)
    }

    pub fn glm() -> Self {
        Self::new("glm", Family::Glm(GlmParams::default()))
    }

    pub fn gam() -> Self {
        Self::new("gam", Family::Gam(GamParams::default()))
    }

    pub fn boosting() -> Self {
        Self::new("boosting", Family::Boosting(BoostParams::default()))
    }

    pub fn random_forest() -> Self {
        Self::new("random_forest", Family::RandomForest(ForestParams::default()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| MtpError::InvalidLearner {
            name: self.name.clone(),
            reason,
        };
        if self.name.trim().is_empty() {
            return Err(bad("empty name".into()));
        }
        match &self.family {
            Family::Mean => Ok(()),
            Family::Glm(p) => p.validate().map_err(bad),
            Family::Gam(p) => p.validate().map_err(bad),
            Family::Boosting(p) => p.validate().map_err(bad),
            Family::RandomForest(p) => p.validate().map_err(bad),
        }
    }
}

/// The default library: mean, GLM, GAM, boosting, random forest.
pub fn default_library() -> Vec<LearnerSpec> {
    vec![
        LearnerSpec::mean(),
        LearnerSpec::glm(),
        LearnerSpec::gam(),
        LearnerSpec::boosting(),
        LearnerSpec::random_forest(),
    ]
}

/// Check names are unique and every entry is valid.
pub fn validate_library(library: &[LearnerSpec]) -> Result<()> {
    if library.is_empty() {
        return Err(MtpError::InvalidLearner {
            name: "<library>".into(),
            reason: "library is empty".into(),
        });
    }
    let mut seen = std::collections::BTreeSet::new();
    for spec in library {
        spec.validate()?;
        if !seen.insert(spec.name.as_str()) {
            return Err(MtpError::InvalidLearner {
                name: spec.name.clone(),
                reason: "duplicate name in library".into(),
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
enum Params {
    Constant(f64),
    Linear(LinearModel),
    Gam(SplineAdditiveModel),
    Boost(BoostedTrees),
    Forest(RandomForest),
}

/// A trained learner. Immutable; predictions require `p` columns.
#[derive(Debug, Clone)]
pub struct FittedModel {
    spec: LearnerSpec,
    task: Task,
    p: usize,
    params: Params,
    ridge_fallback: bool,
}

impl FittedModel {
    pub fn spec(&self) -> &LearnerSpec {
        &self.spec
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn n_features(&self) -> usize {
        self.p
    }

    /// A singular normal-equation system was regularized during fitting.
    pub fn ridge_fallback(&self) -> bool {
        self.ridge_fallback
    }

    /// Linear-predictor coefficients (intercept first) for GLM fits.
    pub fn glm_coefficients(&self) -> Option<&[f64]> {
        match &self.params {
            Params::Linear(m) => Some(m.coefficients()),
            _ => None,
        }
    }
}

pub fn check_inputs(x: ArrayView2<'_, f64>, y: &[f64], weights: Option<&[f64]>) -> Result<Vec<f64>> {
    if x.nrows() != y.len() || y.is_empty() {
        return Err(MtpError::Data(format!(
            "feature rows ({}) and target length ({}) must agree and be nonzero",
            x.nrows(),
            y.len()
        )));
    }
    let w = match weights {
        Some(w) => {
            if w.len() != y.len() {
                return Err(MtpError::Data("weight vector length differs from target".into()));
            }
            if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(MtpError::Data("weights must be finite and nonnegative".into()));
            }
            w.to_vec()
        }
        None => vec![1.0; y.len()],
    };
    if w.iter().sum::<f64>() <= 0.0 {
        return Err(MtpError::Data("weights sum to zero".into()));
    }
    Ok(w)
}

pub fn weighted_mean(y: &[f64], w: &[f64]) -> f64 {
    let sw: f64 = w.iter().sum();
    y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw
}

pub fn clip_prob(p: f64) -> f64 {
    p.clamp(PROB_CLIP, 1.0 - PROB_CLIP)
}

pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Fit `spec` on `(x, y)` for `task`.
pub fn fit(
    spec: &LearnerSpec,
    task: Task,
    x: ArrayView2<'_, f64>,
    y: &[f64],
    weights: Option<&[f64]>,
    seed: u64,
) -> Result<FittedModel> {
    spec.validate()?;
    let w = check_inputs(x, y, weights)?;
    if task == Task::BinaryProbability && y.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(MtpError::Data("binary targets must lie in [0, 1]".into()));
    }
    let mut ridge_fallback = false;
    let params = match &spec.family {
        // no features: every family reduces to the weighted mean
        _ if x.ncols() == 0 => Params::Constant(weighted_mean(y, &w)),
        Family::Mean => Params::Constant(weighted_mean(y, &w)),
        Family::Glm(p) => {
            let m = LinearModel::fit(p, task, x, y, &w)?;
            ridge_fallback = m.ridge_fallback();
            Params::Linear(m)
        }
        Family::Gam(p) => {
            let m = SplineAdditiveModel::fit(p, task, x, y, &w)?;
            ridge_fallback = m.ridge_fallback();
            Params::Gam(m)
        }
        Family::Boosting(p) => Params::Boost(BoostedTrees::fit(p, task, x, y, &w, seed)),
        Family::RandomForest(p) => Params::Forest(RandomForest::fit(p, task, x, y, &w, seed)),
    };
    Ok(FittedModel {
        spec: spec.clone(),
        task,
        p: x.ncols(),
        params,
        ridge_fallback,
    })
}

/// Predict on `x`; probabilities are clipped to `[1e-6, 1 - 1e-6]`.
pub fn predict(model: &FittedModel, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    if x.ncols() != model.p {
        return Err(MtpError::DimensionMismatch {
            expected: model.p,
            got: x.ncols(),
        });
    }
    let raw: Vec<f64> = match &model.params {
        Params::Constant(c) => vec![*c; x.nrows()],
        Params::Linear(m) => m.predict(x),
        Params::Gam(m) => m.predict(x),
        Params::Boost(m) => m.predict(x),
        Params::Forest(m) => m.predict(x),
    };
    Ok(match model.task {
        Task::Regression => raw,
        Task::BinaryProbability => raw.into_iter().map(clip_prob).collect(),
    })
}

/// Convenience: one-column feature matrix from a slice.
pub fn column(x: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((x.len(), 1), x.to_vec()).expect("shape")
}
