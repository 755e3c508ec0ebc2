//! Linear and logistic generalized linear models.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{clip_prob, expit, logit, weighted_mean, Task};
use crate::error::Result;
use crate::linalg::{column_moments, weighted_least_squares};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlmParams {
    /// Ridge penalty per unit of total weight, on standardized columns.
    pub ridge: f64,
    pub max_iter: usize,
    /// Convergence threshold on the largest coefficient change.
    pub tol: f64,
    /// Relative diagonal jitter on the IRLS normal equations.
    pub jitter: f64,
}

impl Default for GlmParams {
    fn default() -> Self {
        GlmParams {
            ridge: 0.0,
            max_iter: 50,
            tol: 1e-8,
            jitter: 1e-8,
        }
    }
}

impl GlmParams {
    pub(crate) fn validate(&self) -> std::result::Result<(), String> {
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err("ridge must be finite and nonnegative".into());
        }
        if self.max_iter == 0 {
            return Err("max_iter must be positive".into());
        }
        if !(self.tol > 0.0) || !(self.jitter >= 0.0) {
            return Err("tol must be positive and jitter nonnegative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Link {
    Identity,
    Logit,
}

/// Fitted GLM with coefficients on the original feature scale.
#[derive(Debug, Clone)]
pub struct LinearModel {
    coef: Vec<f64>,
    link: Link,
    ridge_fallback: bool,
}

impl LinearModel {
    pub(crate) fn fit(params: &GlmParams, task: Task, x: ArrayView2<'_, f64>, y: &[f64], w: &[f64]) -> Result<Self> {
        match task {
            Task::Regression => Ok(Self::fit_linear(params, x, y, w)),
            Task::BinaryProbability => {
                let irls = fit_logistic_irls(params, x, y, w);
                Ok(LinearModel {
                    coef: irls.coef,
                    link: Link::Logit,
                    ridge_fallback: irls.ridge_fallback,
                })
            }
        }
    }

    fn fit_linear(params: &GlmParams, x: ArrayView2<'_, f64>, y: &[f64], w: &[f64]) -> Self {
        let (mean, sd) = column_moments(x, w);
        let xs = standardize(x, &mean, &sd);
        let sw: f64 = w.iter().sum();
        let penalty = vec![params.ridge * sw; x.ncols()];
        let sol = weighted_least_squares(xs.view(), y, w, &penalty, 0.0);
        LinearModel {
            coef: unstandardize(&sol.coef, &mean, &sd),
            link: Link::Identity,
            ridge_fallback: sol.ridge_fallback,
        }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coef
    }

    pub(crate) fn ridge_fallback(&self) -> bool {
        self.ridge_fallback
    }

    pub(crate) fn linear_predictor(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        x.rows()
            .into_iter()
            .map(|r| self.coef[0] + r.iter().zip(&self.coef[1..]).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }

    pub(crate) fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        let eta = self.linear_predictor(x);
        match self.link {
            Link::Identity => eta,
            Link::Logit => eta.into_iter().map(expit).collect(),
        }
    }
}

pub(crate) fn standardize(x: ArrayView2<'_, f64>, mean: &[f64], sd: &[f64]) -> Array2<f64> {
    let mut xs = x.to_owned();
    for (j, mut col) in xs.columns_mut().into_iter().enumerate() {
        col.mapv_inplace(|v| (v - mean[j]) / sd[j]);
    }
    xs
}

pub(crate) fn unstandardize(coef_s: &[f64], mean: &[f64], sd: &[f64]) -> Vec<f64> {
    let mut coef = Vec::with_capacity(coef_s.len());
    let mut intercept = coef_s[0];
    for j in 0..mean.len() {
        intercept -= coef_s[j + 1] * mean[j] / sd[j];
    }
    coef.push(intercept);
    coef.extend((0..mean.len()).map(|j| coef_s[j + 1] / sd[j]));
    coef
}

/// Diagnostics of an IRLS logistic fit.
#[derive(Debug, Clone)]
pub struct IrlsFit {
    /// Intercept first, original feature scale.
    pub coef: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Mean weighted log-loss at the start and after each iteration.
    pub loss_trace: Vec<f64>,
    pub ridge_fallback: bool,
}

/// Weighted mean log-loss of linear predictor `eta` against targets in [0,1].
fn log_loss(eta: &[f64], y: &[f64], w: &[f64], sw: f64) -> f64 {
    eta.iter()
        .zip(y)
        .zip(w)
        .map(|((&e, &yi), &wi)| {
            // softplus(e) - y e, stable for large |e|
            let sp = if e > 0.0 {
                e + (-e).exp().ln_1p()
            } else {
                e.exp().ln_1p()
            };
            wi * (sp - yi * e)
        })
        .sum::<f64>()
        / sw
}

/// Logistic regression by iteratively reweighted least squares with
/// step-halving, so the training loss never increases between iterations.
pub fn fit_logistic_irls(params: &GlmParams, x: ArrayView2<'_, f64>, y: &[f64], w: &[f64]) -> IrlsFit {
    let (n, p) = x.dim();
    let (mean, sd) = column_moments(x, w);
    let xs = standardize(x, &mean, &sd);
    let sw: f64 = w.iter().sum();
    let penalty = vec![params.ridge * sw; p];

    let eta_of = |beta: &[f64]| -> Vec<f64> {
        xs.rows()
            .into_iter()
            .map(|r| beta[0] + r.iter().zip(&beta[1..]).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    };
    let penalized = |beta: &[f64], eta: &[f64]| -> f64 {
        log_loss(eta, y, w, sw)
            + beta[1..]
                .iter()
                .zip(&penalty)
                .map(|(b, l)| 0.5 * l * b * b)
                .sum::<f64>()
                / sw
    };

    let mut beta = vec![0.0; p + 1];
    beta[0] = logit(clip_prob(weighted_mean(y, w)));
    let mut eta = eta_of(&beta);
    let mut loss = penalized(&beta, &eta);
    let mut trace = vec![loss];
    let mut converged = false;
    let mut ridge_fallback = false;
    let mut iterations = 0;

    for _ in 0..params.max_iter {
        iterations += 1;
        let mut z = vec![0.0; n];
        let mut wh = vec![0.0; n];
        for i in 0..n {
            let pi = expit(eta[i]);
            let h = (pi * (1.0 - pi)).max(1e-10);
            z[i] = eta[i] + (y[i] - pi) / h;
            wh[i] = w[i] * h;
        }
        let sol = weighted_least_squares(xs.view(), &z, &wh, &penalty, params.jitter);
        ridge_fallback |= sol.ridge_fallback;

        let mut step = 1.0;
        let mut cand: Vec<f64>;
        let mut cand_eta: Vec<f64>;
        let mut cand_loss: f64;
        loop {
            cand = beta.iter().zip(&sol.coef).map(|(b, t)| b + step * (t - b)).collect();
            cand_eta = eta_of(&cand);
            cand_loss = penalized(&cand, &cand_eta);
            if cand_loss <= loss || step < 1e-6 {
                break;
            }
            step *= 0.5;
        }
        if cand_loss > loss {
            // no descent direction left
            converged = true;
            trace.push(loss);
            break;
        }
        let change = cand.iter().zip(&beta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        beta = cand;
        eta = cand_eta;
        loss = cand_loss;
        trace.push(loss);
        if change < params.tol {
            converged = true;
            break;
        }
    }

    IrlsFit {
        coef: unstandardize(&beta, &mean, &sd),
        iterations,
        converged,
        loss_trace: trace,
        ridge_fallback,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    /// Brute-force oracle: best 2-parameter logistic fit on a coarse grid.
    fn grid_search_logistic(x: &[f64], y: &[f64]) -> (f64, f64) {
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in -80..=80 {
            for j in 0..=200 {
                let (b0, b1) = (i as f64 * 0.05, j as f64 * 0.05);
                let eta: Vec<f64> = x.iter().map(|v| b0 + b1 * v).collect();
                let l = log_loss(&eta, y, &vec![1.0; y.len()], y.len() as f64);
                if l < best.0 {
                    best = (l, b0, b1);
                }
            }
        }
        (best.1, best.2)
    }

    #[test]
    fn separable_logistic_is_monotone_with_correct_sign() {
        let x = array![[-1.0], [-1.0], [1.0], [1.0]];
        let y = [0.0, 0.0, 1.0, 1.0];
        let fit = fit_logistic_irls(&GlmParams::default(), x.view(), &y, &[1.0; 4]);
        let (_, slope_oracle) = grid_search_logistic(&[-1.0, -1.0, 1.0, 1.0], &y);
        assert!(slope_oracle > 0.0);
        assert!(fit.coef[1] > 0.0);
        let m = LinearModel {
            coef: fit.coef.clone(),
            link: Link::Logit,
            ridge_fallback: false,
        };
        let grid: Vec<f64> = (-20..=20).map(|i| i as f64 * 0.1).collect();
        let probs = m.predict(super::super::column(&grid).view());
        assert!(probs.windows(2).all(|w| w[0] <= w[1]));
        let at = m.predict(array![[-1.0], [1.0]].view());
        assert!(at[0] < 0.5 && 0.5 < at[1]);
        assert!(fit.iterations <= 50);
    }

    #[test]
    fn loss_is_nonincreasing() {
        let x = array![[-2.0], [-1.0], [-0.5], [0.0], [0.3], [1.0], [2.0], [2.5]];
        let y = [0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0];
        let fit = fit_logistic_irls(&GlmParams::default(), x.view(), &y, &[1.0; 8]);
        assert!(fit.converged);
        assert!(fit.loss_trace.windows(2).all(|w| w[1] <= w[0] + 1e-15));
        // matches the grid oracle's loss to grid resolution
        let (b0, b1) = grid_search_logistic(&[-2.0, -1.0, -0.5, 0.0, 0.3, 1.0, 2.0, 2.5], &y);
        let oracle = log_loss(
            &[-2.0, -1.0, -0.5, 0.0, 0.3, 1.0, 2.0, 2.5].map(|v| b0 + b1 * v),
            &y,
            &[1.0; 8],
            8.0,
        );
        assert!(*fit.loss_trace.last().unwrap() <= oracle + 1e-12);
    }

    #[test]
    fn weight_scale_invariance() {
        let x = array![[0.1, 1.0], [0.5, -1.0], [0.9, 0.3], [1.4, 0.0], [2.0, 1.1], [2.2, -0.4]];
        let y = [0.0, 1.0, 0.0, 1.0, 1.0, 0.0];
        let a = fit_logistic_irls(&GlmParams::default(), x.view(), &y, &[1.0; 6]);
        let b = fit_logistic_irls(&GlmParams::default(), x.view(), &y, &[2.0; 6]);
        for (u, v) in a.coef.iter().zip(&b.coef) {
            assert!((u - v).abs() < 1e-8);
        }
        let reg = [1.0, 2.0, 0.5, 3.0, 2.5, 4.0];
        let l1 = LinearModel::fit_linear(&GlmParams::default(), x.view(), &reg, &[1.0; 6]);
        let l2 = LinearModel::fit_linear(&GlmParams::default(), x.view(), &reg, &[3.0; 6]);
        for (u, v) in l1.coef.iter().zip(&l2.coef) {
            assert!((u - v).abs() < 1e-10);
        }
    }
}
