use ndarray::ArrayView2;
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::tree::{RegressionTree, TreeParams};
use super::{clip_prob, expit, logit, weighted_mean, Task};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoostParams {
    pub rounds: usize,
    pub learning_rate: f64,
    /// Tree depth, 1 to 3.
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Row fraction drawn (without replacement) per round.
    pub subsample: f64,
}

impl Default for BoostParams {
    fn default() -> Self {
        BoostParams {
            rounds: 100,
            learning_rate: 0.1,
            max_depth: 2,
            min_samples_leaf: 5,
            subsample: 1.0,
        }
    }
}

impl BoostParams {
    pub(crate) fn validate(&self) -> Result<(), String> {
        if !(1..=3).contains(&self.max_depth) {
            return Err(format!("max_depth must be 1..=3, got {}", self.max_depth));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err("learning_rate must be in (0, 1]".into());
        }
        if self.min_samples_leaf == 0 {
            return Err("min_samples_leaf must be positive".into());
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err("subsample must be in (0, 1]".into());
        }
        Ok(())
    }
}

/// Gradient-boosted shallow trees: squared-error residual fitting for
/// regression, Newton steps on the log-odds for probabilities.
#[derive(Debug, Clone)]
pub struct BoostedTrees {
    task: Task,
    base: f64,
    learning_rate: f64,
    trees: Vec<RegressionTree>,
    /// Regression predictions are kept inside the training target range.
    range: (f64, f64),
}

impl BoostedTrees {
    pub(crate) fn fit(
        params: &BoostParams,
        task: Task,
        x: ArrayView2<'_, f64>,
        y: &[f64],
        w: &[f64],
        seed: u64,
    ) -> Self {
        let n = y.len();
        let mut rng = rng_from_seed(seed);
        let tp = TreeParams {
            max_depth: params.max_depth,
            min_samples_leaf: params.min_samples_leaf,
            max_features: None,
        };
        let range = y
            .iter()
            .zip(w)
            .filter(|(_, wi)| **wi > 0.0)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (v, _)| {
                (lo.min(*v), hi.max(*v))
            });
        let mean = weighted_mean(y, w);
        let base = match task {
            Task::Regression => mean,
            Task::BinaryProbability => logit(clip_prob(mean)),
        };
        let mut f = vec![base; n];
        let mut trees = Vec::with_capacity(params.rounds);
        let draws = ((params.subsample * n as f64).round() as usize).clamp(1, n);
        let mut target = vec![0.0; n];
        let mut tw = vec![0.0; n];
        for _ in 0..params.rounds {
            match task {
                Task::Regression => {
                    for i in 0..n {
                        target[i] = y[i] - f[i];
                        tw[i] = w[i];
                    }
                }
                Task::BinaryProbability => {
                    for i in 0..n {
                        let p = expit(f[i]);
                        let h = (p * (1.0 - p)).max(1e-6);
                        target[i] = (y[i] - p) / h;
                        tw[i] = w[i] * h;
                    }
                }
            }
            let rows: Vec<usize> = if draws < n {
                let mut r = sample(&mut rng, n, draws).into_vec();
                r.sort_unstable();
                r
            } else {
                (0..n).collect()
            };
            let mut tree = RegressionTree::fit(x, &target, &tw, rows, tp, &mut rng);
            let lr = params.learning_rate;
            tree.map_leaves(|v| lr * v);
            for (fi, d) in f.iter_mut().zip(tree.predict(x)) {
                *fi += d;
            }
            trees.push(tree);
        }
        BoostedTrees {
            task,
            base,
            learning_rate: params.learning_rate,
            trees,
            range,
        }
    }

    pub(crate) fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        let mut f = vec![self.base; x.nrows()];
        for t in &self.trees {
            for (fi, d) in f.iter_mut().zip(t.predict(x)) {
                *fi += d;
            }
        }
        match self.task {
            Task::Regression => f.into_iter().map(|v| v.clamp(self.range.0, self.range.1)).collect(),
            Task::BinaryProbability => f.into_iter().map(expit).collect(),
        }
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }
}
