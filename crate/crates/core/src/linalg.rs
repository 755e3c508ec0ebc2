//! Weighted (penalized) least squares through the normal equations.

use nalgebra::{DMatrix, DVector};
use ndarray::ArrayView2;

/// Outcome of a normal-equation solve.
#[derive(Debug, Clone)]
pub struct WlsSolution {
    /// Intercept first, then one coefficient per column of `x`.
    pub coef: Vec<f64>,
    /// The system was numerically singular and an extra ridge was added.
    pub ridge_fallback: bool,
}

/// Solve `min Σ wᵢ (zᵢ − β₀ − xᵢᵀβ)² + Σ_j penalty_j β_j²`.
///
/// `penalty` has one entry per column of `x` (the intercept is never
/// penalized). `jitter` is added to every diagonal entry relative to the
/// mean diagonal magnitude.
pub fn weighted_least_squares(
    x: ArrayView2<'_, f64>,
    z: &[f64],
    w: &[f64],
    penalty: &[f64],
    jitter: f64,
) -> WlsSolution {
    let (n, p) = x.dim();
    let k = p + 1;
    let mut xtx = DMatrix::<f64>::zeros(k, k);
    let mut xtz = DVector::<f64>::zeros(k);
    let mut row = vec![0.0; k];
    for i in 0..n {
        let wi = w[i];
        if wi == 0.0 {
            continue;
        }
        row[0] = 1.0;
        for j in 0..p {
            row[j + 1] = x[(i, j)];
        }
        for a in 0..k {
            let ra = wi * row[a];
            xtz[a] += ra * z[i];
            for b in a..k {
                xtx[(a, b)] += ra * row[b];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            xtx[(a, b)] = xtx[(b, a)];
        }
    }
    for j in 0..p {
        xtx[(j + 1, j + 1)] += penalty[j];
    }
    let scale = (0..k).map(|a| xtx[(a, a)].abs()).sum::<f64>() / k as f64;
    let scale = if scale > 0.0 { scale } else { 1.0 };
    if jitter > 0.0 {
        for a in 0..k {
            xtx[(a, a)] += jitter * scale;
        }
    }

    if let Some(beta) = try_cholesky(&xtx, &xtz) {
        return WlsSolution {
            coef: beta,
            ridge_fallback: false,
        };
    }
    let mut ridge = 1e-8 * scale;
    loop {
        let mut m = xtx.clone();
        for a in 1..k {
            m[(a, a)] += ridge;
        }
        if let Some(beta) = try_cholesky(&m, &xtz) {
            return WlsSolution {
                coef: beta,
                ridge_fallback: true,
            };
        }
        ridge *= 100.0;
        if ridge > 1e6 * scale {
            // Fully degenerate: intercept-only answer.
            let sw: f64 = w.iter().sum();
            let mut coef = vec![0.0; k];
            if sw > 0.0 {
                coef[0] = w.iter().zip(z).map(|(a, b)| a * b).sum::<f64>() / sw;
            }
            return WlsSolution {
                coef,
                ridge_fallback: true,
            };
        }
    }
}

fn try_cholesky(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<Vec<f64>> {
    let chol = m.clone().cholesky()?;
    let l = chol.l();
    let diag: Vec<f64> = (0..l.nrows()).map(|i| l[(i, i)]).collect();
    let max = diag.iter().copied().fold(0.0, f64::max);
    let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min > 1e-7 * max) {
        return None;
    }
    let sol = chol.solve(rhs);
    if sol.iter().all(|v| v.is_finite()) {
        Some(sol.iter().copied().collect())
    } else {
        None
    }
}

/// Per-column mean and standard deviation (sd floored at 1 for constants).
pub fn column_moments(x: ArrayView2<'_, f64>, w: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let sw: f64 = w.iter().sum();
    let p = x.ncols();
    let mut mean = vec![0.0; p];
    let mut sd = vec![1.0; p];
    for j in 0..p {
        let col = x.column(j);
        let m = col.iter().zip(w).map(|(v, wi)| v * wi).sum::<f64>() / sw;
        let var = col.iter().zip(w).map(|(v, wi)| wi * (v - m) * (v - m)).sum::<f64>() / sw;
        mean[j] = m;
        sd[j] = if var > 1e-24 { var.sqrt() } else { 1.0 };
    }
    (mean, sd)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn exact_line() {
        let x = array![[0.0], [1.0], [2.0]];
        let s = weighted_least_squares(x.view(), &[1.0, 3.0, 5.0], &[1.0; 3], &[0.0], 0.0);
        assert!((s.coef[0] - 1.0).abs() < 1e-12 && (s.coef[1] - 2.0).abs() < 1e-12);
        assert!(!s.ridge_fallback);
    }

    #[test]
    fn collinear_columns_fall_back_to_ridge() {
        let x = array![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]];
        let s = weighted_least_squares(x.view(), &[0.0, 2.0, 4.0, 6.0], &[1.0; 4], &[0.0, 0.0], 0.0);
        assert!(s.ridge_fallback);
        assert!((s.coef[1] + s.coef[2] - 2.0).abs() < 1e-4);
    }
}
