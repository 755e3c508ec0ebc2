//! V-fold cross-validated stacking over a learner library.
//!
//! Each candidate is fitted on every training split and predicts its
//! held-out fold; the out-of-fold matrix `Z` (n × J) then determines simplex
//! weights minimizing the cross-validated loss. Candidates are finally
//! refitted on all rows.

use log::warn;
use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;

use crate::error::{MtpError, Result};
use crate::learners::{self, clip_prob, validate_library, FittedModel, LearnerSpec, Task};
use crate::par::{self, Execution};
use crate::rng::{derive_seed, derive_seed_str, rng_from_seed};

/// EG iteration cap.
pub const EG_MAX_ITER: usize = 500;
/// Initial EG step (on gradients normalized by their largest magnitude).
pub const EG_STEP: f64 = 0.5;
/// Stop when the relative loss improvement falls below this.
pub const EG_TOL: f64 = 1e-10;

/// Fold index (0-based) per unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    folds: Vec<usize>,
    v: usize,
    seed: u64,
}

impl FoldAssignment {
    pub fn fold_of(&self, i: usize) -> usize {
        self.folds[i]
    }

    pub fn folds(&self) -> &[usize] {
        &self.folds
    }

    pub fn v(&self) -> usize {
        self.v
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.v];
        for &f in &self.folds {
            s[f] += 1;
        }
        s
    }
}

/// Balanced random partition of `0..n` into `v` folds.
pub fn make_folds(n: usize, v: usize, seed: u64) -> Result<FoldAssignment> {
    if v < 2 || v > n {
        return Err(MtpError::InvalidFolds(format!("need 2 <= V <= n, got V={v}, n={n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let mut folds = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        folds[i] = pos % v;
    }
    Ok(FoldAssignment { folds, v, seed })
}

/// Folds drawn over groups: rows sharing a group id share a fold.
/// Group ids must be `0..G`.
pub fn make_group_folds(groups: &[usize], v: usize, seed: u64) -> Result<FoldAssignment> {
    let g = groups.iter().copied().max().map_or(0, |m| m + 1);
    let by_group = make_folds(g, v, seed)?;
    Ok(FoldAssignment {
        folds: groups.iter().map(|&k| by_group.fold_of(k)).collect(),
        v,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuperLearnerConfig {
    pub task: Task,
    pub v: usize,
    pub seed: u64,
    pub execution: Execution,
}

impl SuperLearnerConfig {
    pub fn new(task: Task, v: usize, seed: u64) -> Self {
        SuperLearnerConfig {
            task,
            v,
            seed,
            execution: Execution::default(),
        }
    }
}

/// Convex combination of refitted candidates.
#[derive(Debug, Clone)]
pub struct EnsembleModel {
    task: Task,
    models: Vec<FittedModel>,
    weights: Vec<f64>,
    cv_risks: Vec<f64>,
    ensemble_cv_risk: f64,
    warnings: Vec<String>,
}

impl EnsembleModel {
    pub fn task(&self) -> Task {
        self.task
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Cross-validated risk per candidate, in library order.
    pub fn cv_risks(&self) -> &[f64] {
        &self.cv_risks
    }

    pub fn ensemble_cv_risk(&self) -> f64 {
        self.ensemble_cv_risk
    }

    pub fn names(&self) -> Vec<&str> {
        self.models.iter().map(|m| m.spec().name.as_str()).collect()
    }

    pub fn models(&self) -> &[FittedModel] {
        &self.models
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Simplex slack: |Σα − 1| plus the most negative entry magnitude.
    pub fn simplex_violation(&self) -> f64 {
        let s: f64 = self.weights.iter().sum();
        let neg = self.weights.iter().copied().fold(0.0, |m: f64, a| m.max(-a));
        (s - 1.0).abs() + neg
    }
}

/// Weights and risks of a fitted ensemble, kept for diagnostics.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EnsembleSummary {
    pub names: Vec<String>,
    pub weights: Vec<f64>,
    pub cv_risks: Vec<f64>,
    pub ensemble_cv_risk: f64,
}

impl EnsembleSummary {
    /// Ensemble CV risk minus the best candidate's (≤ 0 at the optimum).
    pub fn optimality_gap(&self) -> f64 {
        let best = self.cv_risks.iter().copied().fold(f64::INFINITY, f64::min);
        self.ensemble_cv_risk - best
    }

    pub fn simplex_violation(&self) -> f64 {
        let s: f64 = self.weights.iter().sum();
        let neg = self.weights.iter().copied().fold(0.0, |m: f64, a| m.max(-a));
        (s - 1.0).abs() + neg
    }
}

impl From<&EnsembleModel> for EnsembleSummary {
    fn from(m: &EnsembleModel) -> Self {
        EnsembleSummary {
            names: m.names().into_iter().map(String::from).collect(),
            weights: m.weights.clone(),
            cv_risks: m.cv_risks.clone(),
            ensemble_cv_risk: m.ensemble_cv_risk,
        }
    }
}

/// Weighted mean loss of predictions `f` against `y`.
pub fn risk(task: Task, y: &[f64], f: &[f64], w: &[f64]) -> f64 {
    let sw: f64 = w.iter().sum();
    let total: f64 = match task {
        Task::Regression => y.iter().zip(f).zip(w).map(|((a, b), wi)| wi * (a - b) * (a - b)).sum(),
        Task::BinaryProbability => y
            .iter()
            .zip(f)
            .zip(w)
            .map(|((&yi, &p), wi)| {
                let p = clip_prob(p);
                -wi * (yi * p.ln() + (1.0 - yi) * (1.0 - p).ln())
            })
            .sum(),
    };
    total / sw
}

fn combine(z: ArrayView2<'_, f64>, alpha: &[f64]) -> Vec<f64> {
    z.rows()
        .into_iter()
        .map(|r| r.iter().zip(alpha).map(|(a, b)| a * b).sum())
        .collect()
}

fn gradient(task: Task, z: ArrayView2<'_, f64>, y: &[f64], f: &[f64], w: &[f64]) -> Vec<f64> {
    let sw: f64 = w.iter().sum();
    let mut g = vec![0.0; z.ncols()];
    for (i, row) in z.rows().into_iter().enumerate() {
        let d = match task {
            Task::Regression => 2.0 * (f[i] - y[i]),
            Task::BinaryProbability => {
                let p = clip_prob(f[i]);
                (p - y[i]) / (p * (1.0 - p))
            }
        };
        let d = w[i] * d / sw;
        for (gj, zij) in g.iter_mut().zip(row.iter()) {
            *gj += d * zij;
        }
    }
    g
}

/// Simplex weights minimizing the loss of `Zα`.
///
/// Exponentiated-gradient descent from uniform weights with step-halving on
/// any loss increase, followed by a comparison against every vertex of the
/// simplex (each single candidate), keeping the strictly better solution.
pub fn optimize_simplex_weights(task: Task, z: ArrayView2<'_, f64>, y: &[f64], w: &[f64]) -> Vec<f64> {
    let j = z.ncols();
    let mut alpha = vec![1.0 / j as f64; j];
    if j == 1 {
        return alpha;
    }
    let mut f = combine(z, &alpha);
    let mut loss = risk(task, y, &f, w);
    let mut step = EG_STEP;
    for _ in 0..EG_MAX_ITER {
        let g = gradient(task, z, y, &f, w);
        let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gmax == 0.0 || !gmax.is_finite() {
            break;
        }
        let gmin = g.iter().copied().fold(f64::INFINITY, f64::min);
        let mut improved = false;
        while step > 1e-12 {
            // shift by the min gradient for numerical range; cancels on renormalization
            let mut cand: Vec<f64> = alpha
                .iter()
                .zip(&g)
                .map(|(a, gi)| a * (-step * (gi - gmin) / gmax).exp())
                .collect();
            let s: f64 = cand.iter().sum();
            cand.iter_mut().for_each(|a| *a /= s);
            let cf = combine(z, &cand);
            let cl = risk(task, y, &cf, w);
            if cl <= loss {
                let rel = (loss - cl) / loss.abs().max(1e-300);
                alpha = cand;
                f = cf;
                loss = cl;
                improved = rel >= EG_TOL;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
        step = (step * 2.0).min(EG_STEP * 64.0);
    }

    let mut best_vertex: Option<(usize, f64)> = None;
    for k in 0..j {
        let r = risk(task, y, &z.column(k).to_vec(), w);
        if best_vertex.is_none_or(|(_, b)| r < b) {
            best_vertex = Some((k, r));
        }
    }
    if let Some((k, r)) = best_vertex {
        if r < loss {
            alpha = vec![0.0; j];
            alpha[k] = 1.0;
        }
    }
    let s: f64 = alpha.iter().sum();
    alpha.iter_mut().for_each(|a| *a /= s);
    alpha
}

/// Fit the Super Learner. `groups`, when given, keeps rows of one group in
/// the same fold.
pub fn fit_super_learner(
    x: ArrayView2<'_, f64>,
    y: &[f64],
    weights: Option<&[f64]>,
    library: &[LearnerSpec],
    config: &SuperLearnerConfig,
    groups: Option<&[usize]>,
) -> Result<EnsembleModel> {
    validate_library(library)?;
    let w = learners::check_inputs(x, y, weights)?;
    let n = y.len();
    let folds = match groups {
        Some(g) => make_group_folds(g, config.v, config.seed)?,
        None => make_folds(n, config.v, config.seed)?,
    };
    let task = config.task;
    let jn = library.len();
    let v = folds.v();

    let fold_rows: Vec<(Vec<usize>, Vec<usize>)> =
        (0..v).map(|k| (0..n).partition(|&i| folds.fold_of(i) != k)).collect();

    let jobs = par::map_indexed(jn * v, config.execution, |job| {
        let (j, k) = (job / v, job % v);
        let spec = &library[j];
        let (train, test) = &fold_rows[k];
        let xt = x.select(Axis(0), train);
        let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let wt: Vec<f64> = train.iter().map(|&i| w[i]).collect();
        let xv = x.select(Axis(0), test);
        let seed = derive_seed(derive_seed_str(config.seed, &spec.name), k as u64);
        let fitted =
            learners::fit(spec, task, xt.view(), &yt, Some(&wt), seed).and_then(|m| learners::predict(&m, xv.view()));
        match fitted {
            Ok(p) if p.iter().all(|v| v.is_finite()) => (p, None),
            other => {
                let reason = match other {
                    Err(e) => e.to_string(),
                    _ => "non-finite predictions".to_string(),
                };
                let fallback = if wt.iter().sum::<f64>() > 0.0 {
                    learners::weighted_mean(&yt, &wt)
                } else {
                    learners::weighted_mean(y, &w)
                };
                let fallback = match task {
                    Task::Regression => fallback,
                    Task::BinaryProbability => clip_prob(fallback),
                };
                (
                    vec![fallback; test.len()],
                    Some(format!("candidate `{}` failed on fold {}: {reason}", spec.name, k + 1)),
                )
            }
        }
    });

    let mut z = Array2::<f64>::zeros((n, jn));
    let mut warnings = Vec::new();
    for (job, (pred, warning)) in jobs.into_iter().enumerate() {
        let (j, k) = (job / v, job % v);
        for (&i, p) in fold_rows[k].1.iter().zip(pred) {
            z[(i, j)] = p;
        }
        if let Some(msg) = warning {
            warn!("{msg}");
            warnings.push(msg);
        }
    }

    let cv_risks: Vec<f64> = (0..jn).map(|j| risk(task, y, &z.column(j).to_vec(), &w)).collect();
    let alpha = optimize_simplex_weights(task, z.view(), y, &w);
    let ensemble_cv_risk = risk(task, y, &combine(z.view(), &alpha), &w);

    let refits = par::map_slice(library, config.execution, |spec| {
        let seed = derive_seed_str(config.seed, &spec.name);
        learners::fit(spec, task, x, y, Some(&w), seed)
    });
    let mut models = Vec::with_capacity(jn);
    for (spec, r) in library.iter().zip(refits) {
        match r {
            Ok(m) => models.push(m),
            Err(e) => {
                let msg = format!("candidate `{}` failed on full data: {e}; using mean", spec.name);
                warn!("{msg}");
                warnings.push(msg);
                let mean_spec = LearnerSpec::new(spec.name.clone(), learners::Family::Mean);
                models.push(learners::fit(&mean_spec, task, x, y, Some(&w), 0)?);
            }
        }
    }

    Ok(EnsembleModel {
        task,
        models,
        weights: alpha,
        cv_risks,
        ensemble_cv_risk,
        warnings,
    })
}

/// `Σ_j α_j predict_j(x)`; probabilities re-clipped.
pub fn ensemble_predict(model: &EnsembleModel, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    let mut out = vec![0.0; x.nrows()];
    for (m, &a) in model.models.iter().zip(&model.weights) {
        if a == 0.0 {
            if m.n_features() != x.ncols() {
                return Err(MtpError::DimensionMismatch {
                    expected: m.n_features(),
                    got: x.ncols(),
                });
            }
            continue;
        }
        for (o, p) in out.iter_mut().zip(learners::predict(m, x)?) {
            *o += a * p;
        }
    }
    if model.task == Task::BinaryProbability {
        out.iter_mut().for_each(|v| *v = clip_prob(*v));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn fold_balance_and_determinism() {
        assert_eq!(make_folds(10, 5, 1).unwrap().sizes(), vec![2; 5]);
        let mut s = make_folds(7, 3, 1).unwrap().sizes();
        s.sort_unstable();
        assert_eq!(s, vec![2, 2, 3]);
        assert_eq!(make_folds(50, 5, 9).unwrap(), make_folds(50, 5, 9).unwrap());
        assert_ne!(make_folds(50, 5, 9).unwrap(), make_folds(50, 5, 10).unwrap());
        assert!(make_folds(3, 4, 0).is_err());
        assert!(make_folds(3, 1, 0).is_err());
    }

    #[test]
    fn group_folds_keep_pairs_together() {
        let groups: Vec<usize> = (0..20).flat_map(|g| [g, g]).collect();
        let f = make_group_folds(&groups, 5, 3).unwrap();
        for pair in f.folds().chunks(2) {
            assert_eq!(pair[0], pair[1]);
        }
    }

    #[test]
    fn single_candidate_gets_full_weight() {
        let x = array![[0.0], [1.0], [2.0], [3.0], [4.0], [5.0]];
        let cfg = SuperLearnerConfig::new(Task::Regression, 3, 0);
        let m = fit_super_learner(
            x.view(),
            &[1.0, 2.0, 3.0, 2.0, 1.0, 0.0],
            None,
            &[LearnerSpec::mean()],
            &cfg,
            None,
        )
        .unwrap();
        assert_eq!(m.weights(), &[1.0]);
    }

    #[test]
    fn identical_candidates_stay_uniform() {
        let z = array![[0.1, 0.1], [0.5, 0.5], [0.9, 0.9]];
        let a = optimize_simplex_weights(Task::Regression, z.view(), &[0.0, 0.6, 1.0], &[1.0; 3]);
        assert!((a[0] - 0.5).abs() < 1e-12 && (a[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ensemble_predict_combines() {
        let x = array![[0.0], [1.0]];
        let a = learners::fit(&LearnerSpec::mean(), Task::Regression, x.view(), &[0.2, 0.2], None, 0).unwrap();
        let b = learners::fit(
            &LearnerSpec::new("mean2", learners::Family::Mean),
            Task::Regression,
            x.view(),
            &[0.4, 0.4],
            None,
            0,
        )
        .unwrap();
        let mut m = EnsembleModel {
            task: Task::Regression,
            models: vec![a, b],
            weights: vec![0.5, 0.5],
            cv_risks: vec![0.0, 0.0],
            ensemble_cv_risk: 0.0,
            warnings: vec![],
        };
        let p = ensemble_predict(&m, array![[3.0]].view()).unwrap();
        assert!((p[0] - 0.3).abs() < 1e-15);
        m.weights = vec![1.0, 0.0];
        assert_eq!(ensemble_predict(&m, array![[3.0]].view()).unwrap(), vec![0.2]);
        assert!(ensemble_predict(&m, array![[3.0, 1.0]].view()).is_err());
    }

    #[test]
    fn interior_optimum_found() {
        // y is exactly the average of the two candidate columns
        let z = array![[0.0, 1.0], [1.0, 0.0], [0.2, 0.6], [0.8, 0.4]];
        let y = [0.5, 0.5, 0.4, 0.6];
        let a = optimize_simplex_weights(Task::Regression, z.view(), &y, &[1.0; 4]);
        assert!((a[0] - 0.5).abs() < 1e-3);
    }
}
