//! Targeted estimation of the shift parameter and the difference from the
//! observed mean, with influence-curve Wald inference.
//!
//! Chain: scale `Y` to `[0, 1]`, fit the outcome regression `Q̄(A, W)` by
//! Super Learner and predict it at natural and shifted exposures, estimate
//! the density ratio `r`, fluctuate `logit Q̄` by one intercept `ε` fitted
//! with weights `r`, then average the targeted shifted predictions.

use serde::{Deserialize, Serialize};

use crate::density_ratio::{estimate_density_ratio, DensityRatioConfig, DensityRatioEstimate};
use crate::error::{MtpError, Result};
use crate::estimate::ShiftEstimate;
use crate::frame::AnalysisFrame;
use crate::learners::{expit, logit, LearnerSpec, Task};
use crate::par::Execution;
use crate::policy::{shift_frame, ShiftPolicy};
use crate::rng::derive_seed;
use crate::scaler::{fit_scaler, OutcomeScaler};
use crate::super_learner::{ensemble_predict, fit_super_learner, EnsembleSummary, SuperLearnerConfig};

/// Normal quantile used for 95% Wald intervals.
pub const Z_975: f64 = 1.96;
/// Scaled outcome predictions are kept in `[Q_CLIP, 1 - Q_CLIP]`.
pub const Q_CLIP: f64 = 1e-4;
/// Largest acceptable `|Σ rᵢ(ỹᵢ − Q̄*ᵢ)| / n` after targeting.
pub const SCORE_TOL: f64 = 1e-8;
pub const MAX_NEWTON_ITER: usize = 100;

/// Everything `estimate_shift` needs besides the data.
#[derive(Debug, Clone, PartialEq)]
pub struct TmleConfig {
    pub outcome_library: Vec<LearnerSpec>,
    pub ratio_library: Vec<LearnerSpec>,
    pub v: usize,
    pub seed: u64,
    pub ratio_truncation: Option<f64>,
    /// Declared outcome bounds; observed min/max when absent.
    pub outcome_bounds: Option<(f64, f64)>,
    pub execution: Execution,
}

impl TmleConfig {
    pub fn new(outcome_library: Vec<LearnerSpec>, ratio_library: Vec<LearnerSpec>, v: usize, seed: u64) -> Self {
        TmleConfig {
            outcome_library,
            ratio_library,
            v,
            seed,
            ratio_truncation: None,
            outcome_bounds: None,
            execution: Execution::default(),
        }
    }
}

/// Initial outcome regression predictions (scaled, clipped) plus the
/// density ratio.
#[derive(Debug, Clone)]
pub struct NuisanceFit {
    pub scaler: OutcomeScaler,
    pub y_scaled: Vec<f64>,
    /// `Q̄(A, W)`
    pub q_observed: Vec<f64>,
    /// `Q̄(A^d, W)`
    pub q_shifted: Vec<f64>,
    pub shifted_exposure: Vec<f64>,
    pub truncated_shift_count: usize,
    pub extrapolated_fraction: f64,
    pub outcome_ensemble: EnsembleSummary,
    pub ratio: Option<DensityRatioEstimate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetedFit {
    pub epsilon: f64,
    /// `Q̄*(A, W)`, scaled
    pub q_star_observed: Vec<f64>,
    /// `Q̄*(A^d, W)`, scaled
    pub q_star_shifted: Vec<f64>,
    /// `Σ rᵢ(ỹᵢ − Q̄*(aᵢ, wᵢ)) / n`
    pub score_residual: f64,
    pub iterations: usize,
}

fn clip_q(v: f64) -> f64 {
    v.clamp(Q_CLIP, 1.0 - Q_CLIP)
}

/// Super Learner regression of the scaled outcome on `(A, W)`, predicted at
/// the natural and the shifted exposures. Leaves `ratio` empty.
pub fn fit_initial_outcome(
    frame: &AnalysisFrame,
    policy: &ShiftPolicy,
    library: &[LearnerSpec],
    v: usize,
    seed: u64,
    outcome_bounds: Option<(f64, f64)>,
    execution: Execution,
) -> Result<NuisanceFit> {
    policy.validate()?;
    let scaler = fit_scaler(frame.outcome(), outcome_bounds)?;
    let y_scaled = scaler.scale_all(frame.outcome());
    let shifted = shift_frame(frame, policy);
    let x_obs = frame.features_with(frame.exposure());
    let x_shift = frame.features_with(&shifted.values);
    let cfg = SuperLearnerConfig {
        task: Task::Regression,
        v,
        seed,
        execution,
    };
    let model = fit_super_learner(x_obs.view(), &y_scaled, None, library, &cfg, None)?;
    let q_observed: Vec<f64> = ensemble_predict(&model, x_obs.view())?
        .into_iter()
        .map(clip_q)
        .collect();
    let q_shifted: Vec<f64> = ensemble_predict(&model, x_shift.view())?
        .into_iter()
        .map(clip_q)
        .collect();

    let (lo, hi) = frame
        .exposure()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &a| (l.min(a), h.max(a)));
    let outside = shifted.values.iter().filter(|&&a| a < lo || a > hi).count();

    Ok(NuisanceFit {
        scaler,
        y_scaled,
        q_observed,
        q_shifted,
        extrapolated_fraction: outside as f64 / frame.n() as f64,
        truncated_shift_count: shifted.truncated,
        shifted_exposure: shifted.values,
        outcome_ensemble: EnsembleSummary::from(&model),
        ratio: None,
    })
}

/// Weighted score of the intercept fluctuation and its derivative.
fn score(eps: f64, offset: &[f64], y: &[f64], r: &[f64]) -> (f64, f64) {
    let (mut s, mut d) = (0.0, 0.0);
    for ((&o, &yi), &ri) in offset.iter().zip(y).zip(r) {
        let q = expit(o + eps);
        s += ri * (yi - q);
        d -= ri * q * (1.0 - q);
    }
    (s, d)
}

/// Solve the intercept-only weighted logistic regression with offset
/// `logit Q̄(A, W)`: find `ε` with `Σ rᵢ(ỹᵢ − expit(logit Q̄ᵢ + ε)) = 0`.
///
/// Newton steps safeguarded by a bisection bracket (the score is strictly
/// decreasing in `ε`).
pub fn target(nuisance: &NuisanceFit, y_scaled: &[f64], r: &[f64]) -> Result<TargetedFit> {
    let n = y_scaled.len();
    if r.len() != n || nuisance.q_observed.len() != n {
        return Err(MtpError::InvalidFrame("targeting inputs differ in length".into()));
    }
    if r.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(MtpError::InvalidFrame(
            "density ratio weights must be finite and nonnegative".into(),
        ));
    }
    let offset: Vec<f64> = nuisance.q_observed.iter().map(|&q| logit(q)).collect();
    let nf = n as f64;
    let stop = 1e-15 * nf;

    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut eps = 0.0;
    let mut iterations = 0;
    let (mut s, mut d) = score(eps, &offset, y_scaled, r);
    while iterations < MAX_NEWTON_ITER && s.abs() > stop {
        iterations += 1;
        if s > 0.0 {
            lo = eps;
        } else {
            hi = eps;
        }
        let mut next = if d < 0.0 { eps - s / d } else { f64::NAN };
        if !(next.is_finite() && next > lo && next < hi) {
            next = match (lo.is_finite(), hi.is_finite()) {
                (true, true) => 0.5 * (lo + hi),
                (true, false) => lo + 1.0 + (eps - lo).abs() * 2.0,
                (false, true) => hi - 1.0 - (hi - eps).abs() * 2.0,
                (false, false) => eps,
            };
        }
        if next == eps {
            break;
        }
        eps = next;
        (s, d) = score(eps, &offset, y_scaled, r);
    }
    let score_residual = s / nf;
    if !(score_residual.abs() < SCORE_TOL) || !eps.is_finite() {
        return Err(MtpError::TargetingDiverged {
            iterations,
            score: score_residual,
        });
    }
    let fluctuate = |q: &[f64]| -> Vec<f64> { q.iter().map(|&v| expit(logit(v) + eps)).collect() };
    Ok(TargetedFit {
        epsilon: eps,
        q_star_observed: fluctuate(&nuisance.q_observed),
        q_star_shifted: fluctuate(&nuisance.q_shifted),
        score_residual,
        iterations,
    })
}

/// Influence curve of the difference estimator on the outcome scale:
/// `rᵢ(yᵢ − Q*(aᵢ, wᵢ)) + Q*(aᵈᵢ, wᵢ) − ψ̂ − (yᵢ − Ȳ)`.
pub fn influence_curve(q_star_observed: &[f64], q_star_shifted: &[f64], r: &[f64], y: &[f64]) -> Vec<f64> {
    let n = y.len() as f64;
    let psi = q_star_shifted.iter().sum::<f64>() / n;
    let ybar = y.iter().sum::<f64>() / n;
    (0..y.len())
        .map(|i| r[i] * (y[i] - q_star_observed[i]) + q_star_shifted[i] - psi - (y[i] - ybar))
        .collect()
}

/// `se = sqrt(Σ ICᵢ² / n) / √n`, CI `ψ̂Δ ± 1.96 se`.
pub fn wald_interval(ic: &[f64], psi_delta: f64) -> (f64, f64, f64) {
    let n = ic.len() as f64;
    let second_moment = ic.iter().map(|v| v * v).sum::<f64>() / n;
    let se = second_moment.sqrt() / n.sqrt();
    (se, psi_delta - Z_975 * se, psi_delta + Z_975 * se)
}

/// Full output of one shift analysis, with intermediate fits.
#[derive(Debug, Clone)]
pub struct ShiftAnalysis {
    pub estimate: ShiftEstimate,
    pub nuisance: NuisanceFit,
    pub targeted: TargetedFit,
    pub influence_curve: Vec<f64>,
}

impl ShiftAnalysis {
    pub fn ratio(&self) -> &DensityRatioEstimate {
        self.nuisance.ratio.as_ref().expect("ratio fitted in analyze_shift")
    }
}

pub fn analyze_shift(frame: &AnalysisFrame, policy: &ShiftPolicy, config: &TmleConfig) -> Result<ShiftAnalysis> {
    let mut nuisance = fit_initial_outcome(
        frame,
        policy,
        &config.outcome_library,
        config.v,
        derive_seed(config.seed, 1),
        config.outcome_bounds,
        config.execution,
    )?;
    let ratio_cfg = DensityRatioConfig {
        v: config.v,
        seed: derive_seed(config.seed, 2),
        truncation: config.ratio_truncation,
        execution: config.execution,
    };
    let ratio = estimate_density_ratio(frame, policy, &config.ratio_library, &ratio_cfg)?;
    let targeted = target(&nuisance, &nuisance.y_scaled, &ratio.r)?;

    let scaler = nuisance.scaler;
    let q_obs = scaler.unscale_all(&targeted.q_star_observed);
    let q_shift = scaler.unscale_all(&targeted.q_star_shifted);
    let y = frame.outcome();
    let n = frame.n() as f64;
    let psi_shift = q_shift.iter().sum::<f64>() / n;
    let psi_observed = y.iter().sum::<f64>() / n;
    let ic = influence_curve(&q_obs, &q_shift, &ratio.r, y);
    let (std_err, _, _) = wald_interval(&ic, psi_shift - psi_observed);

    let mut estimate = ShiftEstimate::from_parts(psi_shift, psi_observed, std_err);
    estimate.max_density_ratio = ratio.max_r;
    estimate.mean_density_ratio = ratio.mean_r;
    estimate.score_residual = targeted.score_residual;
    estimate.epsilon = targeted.epsilon;
    estimate.n = frame.n();
    estimate.truncated_shift_count = nuisance.truncated_shift_count;
    estimate.extrapolated_fraction = nuisance.extrapolated_fraction;

    nuisance.ratio = Some(ratio);
    Ok(ShiftAnalysis {
        estimate,
        nuisance,
        targeted,
        influence_curve: ic,
    })
}

/// Estimate `ψ(A^d)`, `Ȳ`, their difference and a 95% Wald interval.
pub fn estimate_shift(frame: &AnalysisFrame, policy: &ShiftPolicy, config: &TmleConfig) -> Result<ShiftEstimate> {
    analyze_shift(frame, policy, config).map(|a| a.estimate)
}

/// Serializable copy of the fluctuation outcome for reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetingSummary {
    pub epsilon: f64,
    pub score_residual: f64,
    pub iterations: usize,
}

impl From<&TargetedFit> for TargetingSummary {
    fn from(t: &TargetedFit) -> Self {
        TargetingSummary {
            epsilon: t.epsilon,
            score_residual: t.score_residual,
            iterations: t.iterations,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use crate::sim::standard_normal_vec;
    use ndarray::Array2;
    use rand::Rng as _;

    fn nuisance_from(q_obs: Vec<f64>, q_shift: Vec<f64>, y: Vec<f64>) -> NuisanceFit {
        NuisanceFit {
            scaler: OutcomeScaler::new(0.0, 1.0).unwrap(),
            y_scaled: y,
            q_observed: q_obs,
            q_shifted: q_shift,
            shifted_exposure: vec![],
            truncated_shift_count: 0,
            extrapolated_fraction: 0.0,
            outcome_ensemble: EnsembleSummary {
                names: vec![],
                weights: vec![],
                cv_risks: vec![],
                ensemble_cv_risk: 0.0,
            },
            ratio: None,
        }
    }

    #[test]
    fn already_targeted_gives_zero_epsilon() {
        let y = vec![0.2, 0.4, 0.6, 0.8];
        let q = vec![0.5; 4];
        let t = target(&nuisance_from(q.clone(), q.clone(), y.clone()), &y, &[1.0; 4]).unwrap();
        assert_eq!(t.epsilon, 0.0);
        assert_eq!(t.q_star_observed, q);
    }

    #[test]
    fn equal_weights_match_unweighted() {
        let y = vec![0.1, 0.9, 0.7, 0.3, 0.8];
        let q = vec![0.3, 0.5, 0.4, 0.2, 0.6];
        let nf = nuisance_from(q.clone(), q, y.clone());
        let a = target(&nf, &y, &[1.0; 5]).unwrap();
        let b = target(&nf, &y, &[3.7; 5]).unwrap();
        assert!((a.epsilon - b.epsilon).abs() < 1e-12);
        assert!(a.score_residual.abs() < SCORE_TOL);
    }

    #[test]
    fn recovers_known_logit_offset() {
        // ỹ ~ Bernoulli(q); initial fit is off by δ on the logit scale
        let n = 10_000;
        let delta = 0.4;
        let mut rng = rng_from_seed(17);
        let qs: Vec<f64> = (0..n).map(|i| 0.15 + 0.7 * (i as f64 / n as f64)).collect();
        let y: Vec<f64> = qs
            .iter()
            .map(|&q| if rng.random::<f64>() < q { 1.0 } else { 0.0 })
            .collect();
        let init: Vec<f64> = qs.iter().map(|&q| expit(logit(q) - delta)).collect();
        let t = target(&nuisance_from(init.clone(), init, y.clone()), &y, &vec![1.0; n]).unwrap();
        // one-parameter MLE oracle by bisection on the same score
        let offset: Vec<f64> = qs.iter().map(|&q| logit(q) - delta).collect();
        let (mut lo, mut hi) = (-5.0, 5.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if score(mid, &offset, &y, &vec![1.0; n]).0 > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((t.epsilon - 0.5 * (lo + hi)).abs() < 1e-9);
        assert!((t.epsilon - delta).abs() < 0.1, "eps {}", t.epsilon);
    }

    #[test]
    fn boundary_outcome_drives_epsilon_down() {
        let y = vec![0.0; 4];
        let q = vec![0.5; 4];
        let t = target(&nuisance_from(q.clone(), q, y.clone()), &y, &[1.0; 4]).unwrap();
        assert!(t.epsilon < -15.0);
        assert!(t.score_residual.abs() < SCORE_TOL);
    }

    #[test]
    fn non_finite_weights_rejected() {
        let y = vec![0.2, 0.8];
        let q = vec![0.5; 2];
        assert!(target(&nuisance_from(q.clone(), q, y.clone()), &y, &[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn influence_curve_worked_values() {
        // identity policy with perfect fit: IC ≡ 0
        let y = vec![1.0, 4.0, 7.0];
        let ic = influence_curve(&y, &y, &[1.0; 3], &y);
        assert!(ic.iter().all(|v| v.abs() < 1e-15));
        // r ≡ 1, Q* ≡ Ȳ: ICᵢ = Ȳ − ψ̂ = 0 since ψ̂ = Ȳ here
        let ybar = 4.0;
        let ic = influence_curve(&[ybar; 3], &[ybar; 3], &[1.0; 3], &y);
        assert!(ic.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn wald_worked_values() {
        let (se, lo, hi) = wald_interval(&[0.0; 5], 1.5);
        assert_eq!((se, lo, hi), (0.0, 1.5, 1.5));
        let (se, lo, hi) = wald_interval(&[-1.0, 1.0], 0.0);
        assert!((se - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((lo + 1.96 * 0.5f64.sqrt()).abs() < 1e-12 && (hi - 1.386).abs() < 1e-3);
    }

    fn linear_frame(n: usize, seed: u64) -> AnalysisFrame {
        let a = standard_normal_vec(n, seed);
        let e = standard_normal_vec(n, seed + 1000);
        let y: Vec<f64> = a.iter().zip(&e).map(|(a, e)| 2.0 * a + e).collect();
        AnalysisFrame::from_arrays(Array2::zeros((n, 0)), a, y).unwrap()
    }

    #[test]
    fn identity_policy_null() {
        let f = linear_frame(300, 1);
        let cfg = TmleConfig::new(
            vec![LearnerSpec::mean(), LearnerSpec::glm()],
            vec![LearnerSpec::glm()],
            5,
            1,
        );
        let est = estimate_shift(&f, &ShiftPolicy::identity(), &cfg).unwrap();
        assert!(est.psi_delta.abs() < 1e-8);
        assert_eq!(est.psi_delta, est.psi_shift - est.psi_observed);
    }

    #[test]
    fn mean_only_library_is_exposure_independent() {
        let f = linear_frame(100, 2);
        let nf = fit_initial_outcome(
            &f,
            &ShiftPolicy::additive(1.0).unwrap(),
            &[LearnerSpec::mean()],
            5,
            0,
            None,
            Execution::Sequential,
        )
        .unwrap();
        let m = nf.y_scaled.iter().sum::<f64>() / 100.0;
        for (a, b) in nf.q_observed.iter().zip(&nf.q_shifted) {
            assert!((a - m).abs() < 1e-12 && (b - m).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_outcome_with_declared_bounds() {
        let a = standard_normal_vec(40, 3);
        let f = AnalysisFrame::from_arrays(Array2::zeros((40, 0)), a, vec![0.5; 40]).unwrap();
        let nf = fit_initial_outcome(
            &f,
            &ShiftPolicy::additive(1.0).unwrap(),
            &[LearnerSpec::mean(), LearnerSpec::glm()],
            5,
            0,
            Some((0.0, 1.0)),
            Execution::Sequential,
        )
        .unwrap();
        assert!(nf
            .q_observed
            .iter()
            .chain(&nf.q_shifted)
            .all(|v| (v - 0.5).abs() < 1e-9));
        let err = fit_initial_outcome(
            &f,
            &ShiftPolicy::identity(),
            &[LearnerSpec::mean()],
            5,
            0,
            None,
            Execution::Sequential,
        );
        assert!(matches!(err, Err(MtpError::DegenerateOutcome(_))));
    }

    #[test]
    fn noiseless_identity_linear() {
        let a = standard_normal_vec(60, 4);
        let f = AnalysisFrame::from_arrays(Array2::zeros((60, 0)), a.clone(), a).unwrap();
        let nf = fit_initial_outcome(
            &f,
            &ShiftPolicy::identity(),
            &[LearnerSpec::glm()],
            5,
            0,
            None,
            Execution::Sequential,
        )
        .unwrap();
        for (x, y) in nf.q_observed.iter().zip(&nf.q_shifted) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn ic_mean_is_zero_and_ci_contains_estimate() {
        let f = linear_frame(500, 5);
        let cfg = TmleConfig::new(
            vec![LearnerSpec::mean(), LearnerSpec::glm()],
            vec![LearnerSpec::mean(), LearnerSpec::glm()],
            5,
            9,
        );
        let an = analyze_shift(&f, &ShiftPolicy::additive(0.5).unwrap(), &cfg).unwrap();
        let ic = &an.influence_curve;
        let n = ic.len() as f64;
        let mean = ic.iter().sum::<f64>() / n;
        let sd = (ic.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!(mean.abs() <= 1e-6 * sd, "mean {mean} sd {sd}");
        let e = &an.estimate;
        assert!(e.ci_lo <= e.psi_delta && e.psi_delta <= e.ci_hi);
        assert!(e.psi_shift >= an.nuisance.scaler.y_min() && e.psi_shift <= an.nuisance.scaler.y_max());
        assert!((e.psi_delta - 1.0).abs() < 0.3, "{}", e.psi_delta);
    }
}
