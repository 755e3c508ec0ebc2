use ndarray::ArrayView2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::tree::{RegressionTree, TreeParams};
use super::Task;
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features tried per split. Default: p/3 for regression, √p for
    /// probabilities (at least 1).
    pub max_features: Option<usize>,
    /// Bootstrap sample size as a fraction of n.
    pub sample_fraction: f64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 50,
            max_depth: 8,
            min_samples_leaf: 5,
            max_features: None,
            sample_fraction: 1.0,
        }
    }
}

impl ForestParams {
    pub(crate) fn validate(&self) -> Result<(), String> {
        if self.n_trees == 0 {
            return Err("n_trees must be positive".into());
        }
        if self.max_depth == 0 || self.min_samples_leaf == 0 {
            return Err("max_depth and min_samples_leaf must be positive".into());
        }
        if self.max_features == Some(0) {
            return Err("max_features must be positive".into());
        }
        if !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0) {
            return Err("sample_fraction must be in (0, 1]".into());
        }
        Ok(())
    }
}

/// Bagged regression trees with per-split feature subsampling. For the
/// probability task the trees regress the 0/1 labels.
#[derive(Debug, Clone)]
pub struct RandomForest {
    trees: Vec<RegressionTree>,
}

impl RandomForest {
    pub(crate) fn fit(
        params: &ForestParams,
        task: Task,
        x: ArrayView2<'_, f64>,
        y: &[f64],
        w: &[f64],
        seed: u64,
    ) -> Self {
        let (n, p) = x.dim();
        let mtry = params.max_features.unwrap_or(match task {
            Task::Regression => (p / 3).max(1),
            Task::BinaryProbability => ((p as f64).sqrt().floor() as usize).max(1),
        });
        let tree_params = TreeParams {
            max_depth: params.max_depth,
            min_samples_leaf: params.min_samples_leaf,
            max_features: Some(mtry),
        };
        let draws = ((params.sample_fraction * n as f64).round() as usize).max(1);
        let trees = (0..params.n_trees)
            .map(|t| {
                let mut rng = rng_from_seed(derive_seed(seed, t as u64));
                let rows: Vec<usize> = (0..draws).map(|_| rng.random_range(0..n)).collect();
                RegressionTree::fit(x, y, w, rows, tree_params, &mut rng)
            })
            .collect();
        RandomForest { trees }
    }

    pub(crate) fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        let mut out = vec![0.0; x.nrows()];
        for t in &self.trees {
            for (o, v) in out.iter_mut().zip(t.predict(x)) {
                *o += v;
            }
        }
        let k = self.trees.len() as f64;
        out.iter_mut().for_each(|o| *o /= k);
        out
    }
}
