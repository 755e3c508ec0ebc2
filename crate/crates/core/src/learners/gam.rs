//! Additive model: a natural cubic spline basis per covariate, fitted by
//! penalized least squares (regression) or penalized IRLS (probabilities).

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::glm::{fit_logistic_irls, standardize, unstandardize, GlmParams};
use super::{expit, Task};
use crate::error::Result;
use crate::linalg::{column_moments, weighted_least_squares};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GamParams {
    /// Interior knots per covariate, placed at quantiles.
    pub knots: usize,
    /// Ridge penalty per unit of total weight on standardized basis columns.
    pub penalty: f64,
}

impl Default for GamParams {
    fn default() -> Self {
        GamParams {
            knots: 4,
            penalty: 1e-4,
        }
    }
}

impl GamParams {
    pub(crate) fn validate(&self) -> std::result::Result<(), String> {
        if self.knots == 0 {
            return Err("knots must be positive".into());
        }
        if !(self.penalty >= 0.0 && self.penalty.is_finite()) {
            return Err("penalty must be finite and nonnegative".into());
        }
        Ok(())
    }
}

/// Knot sequence for one covariate; empty means a plain linear term.
fn knots_for(col: &[f64], interior: usize) -> Vec<f64> {
    let mut sorted = col.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let q = |t: f64| -> f64 {
        let pos = t * (n - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
    };
    let mut k: Vec<f64> = (0..interior + 2).map(|j| q(j as f64 / (interior + 1) as f64)).collect();
    k.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
    if k.len() < 3 {
        Vec::new()
    } else {
        k
    }
}

fn cube_pos(v: f64) -> f64 {
    if v > 0.0 {
        v * v * v
    } else {
        0.0
    }
}

/// Natural cubic spline basis (truncated power form) without the constant:
/// `x`, then `d_k(x) − d_{K−1}(x)` for `k = 1..K−2`.
fn push_basis(out: &mut Vec<f64>, x: f64, knots: &[f64]) {
    out.push(x);
    let kk = knots.len();
    if kk < 3 {
        return;
    }
    let last = knots[kk - 1];
    let d = |k: usize| (cube_pos(x - knots[k]) - cube_pos(x - last)) / (last - knots[k]);
    let d_prev = d(kk - 2);
    for k in 0..kk - 2 {
        out.push(d(k) - d_prev);
    }
}

#[derive(Debug, Clone)]
pub struct SplineAdditiveModel {
    task: Task,
    knots: Vec<Vec<f64>>,
    coef: Vec<f64>,
    ridge_fallback: bool,
}

impl SplineAdditiveModel {
    pub(crate) fn fit(params: &GamParams, task: Task, x: ArrayView2<'_, f64>, y: &[f64], w: &[f64]) -> Result<Self> {
        let knots: Vec<Vec<f64>> = x
            .columns()
            .into_iter()
            .map(|c| knots_for(&c.to_vec(), params.knots))
            .collect();
        let basis = expand(x, &knots);
        let (coef, ridge_fallback) = match task {
            Task::Regression => {
                let (mean, sd) = column_moments(basis.view(), w);
                let bs = standardize(basis.view(), &mean, &sd);
                let sw: f64 = w.iter().sum();
                let pen = vec![params.penalty * sw; bs.ncols()];
                let sol = weighted_least_squares(bs.view(), y, w, &pen, 0.0);
                (unstandardize(&sol.coef, &mean, &sd), sol.ridge_fallback)
            }
            Task::BinaryProbability => {
                let glm = GlmParams {
                    ridge: params.penalty,
                    ..GlmParams::default()
                };
                let fit = fit_logistic_irls(&glm, basis.view(), y, w);
                (fit.coef, fit.ridge_fallback)
            }
        };
        Ok(SplineAdditiveModel {
            task,
            knots,
            coef,
            ridge_fallback,
        })
    }

    pub(crate) fn ridge_fallback(&self) -> bool {
        self.ridge_fallback
    }

    pub(crate) fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        let basis = expand(x, &self.knots);
        basis
            .rows()
            .into_iter()
            .map(|r| {
                let eta = self.coef[0] + r.iter().zip(&self.coef[1..]).map(|(a, b)| a * b).sum::<f64>();
                match self.task {
                    Task::Regression => eta,
                    Task::BinaryProbability => expit(eta),
                }
            })
            .collect()
    }
}

fn expand(x: ArrayView2<'_, f64>, knots: &[Vec<f64>]) -> Array2<f64> {
    let width: usize = knots.iter().map(|k| if k.len() < 3 { 1 } else { k.len() - 1 }).sum();
    let mut data = Vec::with_capacity(x.nrows() * width);
    for r in x.rows() {
        for (j, k) in knots.iter().enumerate() {
            push_basis(&mut data, r[j], k);
        }
    }
    Array2::from_shape_vec((x.nrows(), width), data).expect("basis width")
}
