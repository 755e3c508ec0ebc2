//! Covariate screening by univariate association with exposure and outcome.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

/// Which covariate set enters the adjusted model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, PartialOrd, Ord, Hash)]
#[serde(rename_all = "kebab-case")]
pub enum ConfounderMode {
    /// Top 8, screened once on rows stacked over all analysis weeks.
    #[default]
    PooledTop8,
    /// Top 8, screened within each week.
    PerWeekTop8,
    /// Top 4, screened within each week.
    PerWeekTop4,
}

impl ConfounderMode {
    pub fn top_k(self) -> usize {
        match self {
            ConfounderMode::PooledTop8 | ConfounderMode::PerWeekTop8 => 8,
            ConfounderMode::PerWeekTop4 => 4,
        }
    }

    pub fn per_week(self) -> bool {
        !matches!(self, ConfounderMode::PooledTop8)
    }

    pub fn label(self) -> &'static str {
        match self {
            ConfounderMode::PooledTop8 => "pooled-top8",
            ConfounderMode::PerWeekTop8 => "per-week-top8",
            ConfounderMode::PerWeekTop4 => "per-week-top4",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovariateScore {
    pub name: String,
    pub corr_exposure: f64,
    pub corr_outcome: f64,
    /// 1-based rank by |corr with exposure|.
    pub rank_exposure: usize,
    pub rank_outcome: usize,
    /// Rows with covariate, exposure and outcome all present.
    pub complete: usize,
}

impl CovariateScore {
    pub fn combined_rank(&self) -> usize {
        self.rank_exposure.min(self.rank_outcome)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScreeningResult {
    /// Selected names, best first.
    pub selected: Vec<String>,
    /// Every candidate in final rank order.
    pub scores: Vec<CovariateScore>,
    pub warning: Option<String>,
}

/// Pearson correlation; 0 when either side is constant or fewer than 2 pairs.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len());
    if n < 2 {
        return 0.0;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return 0.0;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

fn ranks(names: &[String], strength: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..names.len()).collect();
    order.sort_by(|&i, &j| {
        strength[j]
            .partial_cmp(&strength[i])
            .unwrap_or(Ordering::Equal)
            .then_with(|| names[i].cmp(&names[j]))
    });
    let mut rank = vec![0; names.len()];
    for (pos, &i) in order.iter().enumerate() {
        rank[i] = pos + 1;
    }
    rank
}

/// Rank covariates by `min(rank |corr(W, A)|, rank |corr(W, Y)|)` and keep
/// the best `top_k`. Ties at every stage break by name.
///
/// `columns[j][i]` is covariate `j` in row `i`; correlations use the rows
/// where that covariate, `a` and `y` are all present.
pub fn screen_covariates(
    names: &[String],
    columns: &[Vec<Option<f64>>],
    a: &[Option<f64>],
    y: &[Option<f64>],
    top_k: usize,
) -> ScreeningResult {
    let mut corr_a = Vec::with_capacity(names.len());
    let mut corr_y = Vec::with_capacity(names.len());
    let mut complete = Vec::with_capacity(names.len());
    for col in columns {
        let (mut w, mut av, mut yv) = (Vec::new(), Vec::new(), Vec::new());
        for ((wi, ai), yi) in col.iter().zip(a).zip(y) {
            if let (Some(wi), Some(ai), Some(yi)) = (wi, ai, yi) {
                w.push(*wi);
                av.push(*ai);
                yv.push(*yi);
            }
        }
        corr_a.push(pearson(&w, &av));
        corr_y.push(pearson(&w, &yv));
        complete.push(w.len());
    }
    let abs_a: Vec<f64> = corr_a.iter().map(|c| c.abs()).collect();
    let abs_y: Vec<f64> = corr_y.iter().map(|c| c.abs()).collect();
    let ra = ranks(names, &abs_a);
    let ry = ranks(names, &abs_y);

    let mut scores: Vec<CovariateScore> = (0..names.len())
        .map(|j| CovariateScore {
            name: names[j].clone(),
            corr_exposure: corr_a[j],
            corr_outcome: corr_y[j],
            rank_exposure: ra[j],
            rank_outcome: ry[j],
            complete: complete[j],
        })
        .collect();
    scores.sort_by(|s, t| {
        s.combined_rank()
            .cmp(&t.combined_rank())
            .then_with(|| s.name.cmp(&t.name))
    });

    let warning = (names.len() < top_k).then(|| {
        format!(
            "requested {top_k} covariates but only {} candidates are available",
            names.len()
        )
    });
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    ScreeningResult {
        selected: scores.iter().take(top_k).map(|s| s.name.clone()).collect(),
        scores,
        warning,
    }
}
