//! Synthetic data-generating processes with known truth, and a replication
//! harness measuring bias, variance and interval coverage of the estimator.

use log::warn;
use ndarray::Array2;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{MtpError, Result};
use crate::frame::AnalysisFrame;
use crate::par::{self, Execution};
use crate::policy::{apply_shift, ShiftPolicy};
use crate::rng::{derive_seed, rng_from_seed, Rng};
use crate::tmle::{analyze_shift, TmleConfig};

/// Slack used when checking whether an interval contains the truth, so
/// degenerate zero-width intervals at a numerically-zero estimate count.
pub const COVERAGE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum CovariateDist {
    Normal { mean: f64, sd: f64 },
    Uniform { lo: f64, hi: f64 },
    Bernoulli { p: f64 },
}

impl CovariateDist {
    fn draw(&self, rng: &mut Rng) -> f64 {
        match *self {
            CovariateDist::Normal { mean, sd } => mean + sd * rng.sample::<f64, _>(StandardNormal),
            CovariateDist::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            CovariateDist::Bernoulli { p } => f64::from(u8::from(rng.random::<f64>() < p)),
        }
    }

    fn mean(&self) -> f64 {
        match *self {
            CovariateDist::Normal { mean, .. } => mean,
            CovariateDist::Uniform { lo, hi } => 0.5 * (lo + hi),
            CovariateDist::Bernoulli { p } => p,
        }
    }
}

/// `A = intercept + coefᵀW + sigma·ε`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExposureModel {
    pub intercept: f64,
    pub coef: Vec<f64>,
    pub sigma: f64,
}

/// Outcome mean families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum OutcomeFamily {
    /// `β₀ + β_A·A + γᵀW`
    Linear,
    /// Linear plus `β_AA·A²`
    QuadraticInA { beta_aa: f64 },
    /// Linear plus `δ·A·W_j`
    Interaction { covariate: usize, delta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeModel {
    pub family: OutcomeFamily,
    pub intercept: f64,
    pub beta_a: f64,
    pub gamma: Vec<f64>,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpSpec {
    pub covariates: Vec<CovariateDist>,
    pub exposure: ExposureModel,
    pub outcome: OutcomeModel,
}

impl Default for DgpSpec {
    /// Four standard-normal covariates, `A = 0.5(w₁ + w₂) + N(0, 1)`,
    /// `Y = 10 + 2A + w₁ − w₂ + N(0, 2²)`. Under `A + 1` the difference is 2.
    fn default() -> Self {
        DgpSpec {
            covariates: vec![CovariateDist::Normal { mean: 0.0, sd: 1.0 }; 4],
            exposure: ExposureModel {
                intercept: 0.0,
                coef: vec![0.5, 0.5, 0.0, 0.0],
                sigma: 1.0,
            },
            outcome: OutcomeModel {
                family: OutcomeFamily::Linear,
                intercept: 10.0,
                beta_a: 2.0,
                gamma: vec![1.0, -1.0, 0.0, 0.0],
                sigma: 2.0,
            },
        }
    }
}

impl DgpSpec {
    pub fn p(&self) -> usize {
        self.covariates.len()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.p();
        let bad = |m: String| Err(MtpError::InvalidDgp(m));
        if self.exposure.coef.len() != p || self.outcome.gamma.len() != p {
            return bad(format!("coefficient vectors must have length p = {p}"));
        }
        if !(self.exposure.sigma > 0.0) || !(self.outcome.sigma >= 0.0) {
            return bad("exposure sigma must be positive and outcome sigma nonnegative".into());
        }
        if let OutcomeFamily::Interaction { covariate, .. } = self.outcome.family {
            if covariate >= p {
                return bad(format!("interaction covariate {covariate} out of range"));
            }
        }
        for c in &self.covariates {
            let ok = match *c {
                CovariateDist::Normal { sd, .. } => sd > 0.0,
                CovariateDist::Uniform { lo, hi } => lo < hi,
                CovariateDist::Bernoulli { p } => (0.0..=1.0).contains(&p),
            };
            if !ok {
                return bad(format!("invalid covariate distribution {c:?}"));
            }
        }
        Ok(())
    }

    /// `E[μ_A(W)]`
    pub fn exposure_mean(&self) -> f64 {
        self.exposure.intercept
            + self
                .covariates
                .iter()
                .zip(&self.exposure.coef)
                .map(|(c, b)| c.mean() * b)
                .sum::<f64>()
    }

    /// Structural outcome mean `μ_Y(a, w)`.
    pub fn outcome_mean(&self, a: f64, w: &[f64]) -> f64 {
        let o = &self.outcome;
        let base = o.intercept + o.beta_a * a + w.iter().zip(&o.gamma).map(|(x, g)| x * g).sum::<f64>();
        match o.family {
            OutcomeFamily::Linear => base,
            OutcomeFamily::QuadraticInA { beta_aa } => base + beta_aa * a * a,
            OutcomeFamily::Interaction { covariate, delta } => base + delta * a * w[covariate],
        }
    }

    fn draw_unit(&self, rng: &mut Rng, w: &mut [f64]) -> (f64, f64) {
        for (slot, c) in w.iter_mut().zip(&self.covariates) {
            *slot = c.draw(rng);
        }
        let e_a: f64 = rng.sample(StandardNormal);
        let a = self.exposure.intercept
            + w.iter().zip(&self.exposure.coef).map(|(x, b)| x * b).sum::<f64>()
            + self.exposure.sigma * e_a;
        let e_y: f64 = rng.sample(StandardNormal);
        (a, self.outcome.sigma * e_y)
    }
}

/// `n` independent draws; deterministic per seed.
pub fn generate(dgp: &DgpSpec, n: usize, seed: u64) -> Result<AnalysisFrame> {
    dgp.validate()?;
    let p = dgp.p();
    let mut rng = rng_from_seed(seed);
    let mut w = Array2::zeros((n, p));
    let mut a = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut row = vec![0.0; p];
    for i in 0..n {
        let (ai, noise) = dgp.draw_unit(&mut rng, &mut row);
        for j in 0..p {
            w[(i, j)] = row[j];
        }
        a.push(ai);
        y.push(dgp.outcome_mean(ai, &row) + noise);
    }
    AnalysisFrame::from_arrays(w, a, y)
}

/// Monte Carlo truth under a policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthReport {
    pub psi_shift: f64,
    pub psi_observed: f64,
    pub psi_delta: f64,
    pub mc_se_shift: f64,
    pub mc_se_observed: f64,
    pub mc_se_delta: f64,
    pub n_mc: usize,
}

const TRUTH_CHUNK: usize = 1 << 16;

/// Truth by common random numbers: each draw's outcome is evaluated at its
/// natural and its shifted exposure with the same noise.
pub fn true_value(dgp: &DgpSpec, policy: &ShiftPolicy, n_mc: usize, seed: u64, exec: Execution) -> Result<TruthReport> {
    dgp.validate()?;
    policy.validate()?;
    if n_mc < 2 {
        return Err(MtpError::InvalidDgp("n_mc must be at least 2".into()));
    }
    let chunks = n_mc.div_ceil(TRUTH_CHUNK);
    // per chunk: sums and sums of squares of (Y^d, Y, Y^d − Y)
    let parts = par::map_indexed(chunks, exec, |c| {
        let m = TRUTH_CHUNK.min(n_mc - c * TRUTH_CHUNK);
        let mut rng = rng_from_seed(derive_seed(seed, c as u64));
        let mut w = vec![0.0; dgp.p()];
        let mut acc = [0.0f64; 6];
        for _ in 0..m {
            let (a, noise) = dgp.draw_unit(&mut rng, &mut w);
            let y = dgp.outcome_mean(a, &w) + noise;
            let yd = dgp.outcome_mean(apply_shift(policy, a), &w) + noise;
            let d = yd - y;
            acc[0] += yd;
            acc[1] += yd * yd;
            acc[2] += y;
            acc[3] += y * y;
            acc[4] += d;
            acc[5] += d * d;
        }
        acc
    });
    let mut tot = [0.0f64; 6];
    for p in parts {
        for k in 0..6 {
            tot[k] += p[k];
        }
    }
    let n = n_mc as f64;
    let se = |s: f64, ss: f64| {
        let m = s / n;
        ((ss / n - m * m).max(0.0) * n / (n - 1.0)).sqrt() / n.sqrt()
    };
    Ok(TruthReport {
        psi_shift: tot[0] / n,
        psi_observed: tot[2] / n,
        psi_delta: tot[4] / n,
        mc_se_shift: se(tot[0], tot[1]),
        mc_se_observed: se(tot[2], tot[3]),
        mc_se_delta: se(tot[4], tot[5]),
        n_mc,
    })
}

/// Summary of a replication experiment; one row of the simulation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationReport {
    pub cell: String,
    pub n: usize,
    #[serde(rename = "R")]
    pub r: usize,
    pub truth: f64,
    pub mean_estimate: f64,
    pub bias: f64,
    pub sd: f64,
    pub mean_se: f64,
    pub coverage: f64,
    pub ci_width: f64,
    pub failures: usize,
}

/// Per-replication outcome, kept for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationDraw {
    pub psi_delta: f64,
    pub std_err: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub score_residual: f64,
    /// Largest ensemble-minus-best-candidate CV risk over this draw's
    /// Super Learner fits.
    pub optimality_gap: f64,
    pub simplex_violation: f64,
}

pub struct ReplicationSetup<'a> {
    pub cell: &'a str,
    pub dgp: &'a DgpSpec,
    pub policy: &'a ShiftPolicy,
    pub estimator: &'a TmleConfig,
    pub replications: usize,
    pub n: usize,
    pub seed: u64,
    pub truth: f64,
    pub execution: Execution,
}

/// Run the estimator on `R` independent frames and compare with `truth`.
/// Failed replications are excluded and counted; more than 5% failures is
/// an error.
pub fn replicate(setup: &ReplicationSetup<'_>) -> Result<(ReplicationReport, Vec<ReplicationDraw>)> {
    if setup.replications < 2 {
        return Err(MtpError::InvalidDgp("need at least 2 replications".into()));
    }
    setup.dgp.validate()?;
    let outcomes = par::map_indexed(setup.replications, setup.execution, |k| {
        let rep_seed = derive_seed(setup.seed, k as u64);
        let frame = generate(setup.dgp, setup.n, rep_seed)?;
        let mut cfg = setup.estimator.clone();
        cfg.seed = derive_seed(rep_seed, 0x5EED);
        cfg.execution = Execution::Sequential;
        analyze_shift(&frame, setup.policy, &cfg).map(|fit| {
            let e = &fit.estimate;
            let ensembles = std::iter::once(&fit.nuisance.outcome_ensemble).chain(fit.ratio().ensemble.as_ref());
            let (mut gap, mut simplex) = (f64::NEG_INFINITY, 0.0_f64);
            for s in ensembles {
                gap = gap.max(s.optimality_gap());
                simplex = simplex.max(s.simplex_violation());
            }
            ReplicationDraw {
                psi_delta: e.psi_delta,
                std_err: e.std_err,
                ci_lo: e.ci_lo,
                ci_hi: e.ci_hi,
                score_residual: e.score_residual,
                optimality_gap: gap,
                simplex_violation: simplex,
            }
        })
    });
    let total = outcomes.len();
    let mut draws = Vec::with_capacity(total);
    for (k, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(d) => draws.push(d),
            Err(e) => warn!("replication {k} of {} failed: {e}", setup.cell),
        }
    }
    let failed = total - draws.len();
    if failed * 20 > total || draws.len() < 2 {
        return Err(MtpError::ReplicationFailures { failed, total });
    }
    Ok((summarize(setup, &draws, failed), draws))
}

fn summarize(setup: &ReplicationSetup<'_>, draws: &[ReplicationDraw], failures: usize) -> ReplicationReport {
    let m = draws.len() as f64;
    let mean = draws.iter().map(|d| d.psi_delta).sum::<f64>() / m;
    let sd = (draws.iter().map(|d| (d.psi_delta - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
    let slack = COVERAGE_SLACK * setup.truth.abs().max(1.0);
    let covered = draws
        .iter()
        .filter(|d| d.ci_lo - slack <= setup.truth && setup.truth <= d.ci_hi + slack)
        .count();
    ReplicationReport {
        cell: setup.cell.to_string(),
        n: setup.n,
        r: draws.len(),
        truth: setup.truth,
        mean_estimate: mean,
        bias: mean - setup.truth,
        sd,
        mean_se: draws.iter().map(|d| d.std_err).sum::<f64>() / m,
        coverage: covered as f64 / m,
        ci_width: draws.iter().map(|d| d.ci_hi - d.ci_lo).sum::<f64>() / m,
        failures,
    }
}

/// `n` standard normal draws.
pub fn standard_normal_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::LearnerSpec;

    #[test]
    fn noiseless_linear_outcome_is_exact() {
        let mut dgp = DgpSpec::default();
        dgp.outcome.sigma = 0.0;
        let f = generate(&dgp, 50, 1).unwrap();
        for i in 0..50 {
            let w: Vec<f64> = f.covariates().row(i).to_vec();
            assert!((f.outcome()[i] - dgp.outcome_mean(f.exposure()[i], &w)).abs() < 1e-12);
        }
    }

    #[test]
    fn generation_is_seeded() {
        let d = DgpSpec::default();
        assert_eq!(generate(&d, 30, 4).unwrap(), generate(&d, 30, 4).unwrap());
        assert_ne!(generate(&d, 30, 4).unwrap(), generate(&d, 30, 5).unwrap());
    }

    #[test]
    fn exposure_mean_matches_closed_form() {
        let mut d = DgpSpec::default();
        d.exposure.intercept = 3.0;
        let n = 20_000;
        let f = generate(&d, n, 8).unwrap();
        let m = f.exposure().iter().sum::<f64>() / n as f64;
        // sd(A) = sqrt(0.25 + 0.25 + 1)
        let sd = 1.5f64.sqrt();
        assert!((m - d.exposure_mean()).abs() < 4.0 * sd / (n as f64).sqrt());
    }

    #[test]
    fn linear_truth_is_beta_times_c() {
        let d = DgpSpec::default();
        let t = true_value(
            &d,
            &ShiftPolicy::additive(1.0).unwrap(),
            200_000,
            3,
            Execution::Parallel,
        )
        .unwrap();
        assert!((t.psi_delta - 2.0).abs() < 1e-9);
        assert!((t.psi_delta - 2.0).abs() <= 4.0 * t.mc_se_delta + 1e-9);
        let id = true_value(&d, &ShiftPolicy::identity(), 10_000, 3, Execution::Sequential).unwrap();
        assert_eq!(id.psi_delta, 0.0);
    }

    #[test]
    fn multiplicative_truth_closed_form() {
        let mut d = DgpSpec::default();
        d.exposure.intercept = 5.0;
        d.outcome.gamma = vec![0.0; 4];
        let k = 0.8;
        let t = true_value(
            &d,
            &ShiftPolicy::multiplicative(k).unwrap(),
            400_000,
            9,
            Execution::Parallel,
        )
        .unwrap();
        let closed = d.outcome.beta_a * (k - 1.0) * d.exposure_mean();
        assert!(
            (t.psi_delta - closed).abs() < 4.0 * t.mc_se_delta,
            "{} vs {closed}",
            t.psi_delta
        );
    }

    #[test]
    fn identity_policy_replications_cover_trivially() {
        let d = DgpSpec::default();
        let est = TmleConfig::new(
            vec![LearnerSpec::mean(), LearnerSpec::glm()],
            vec![LearnerSpec::glm()],
            5,
            0,
        );
        let setup = ReplicationSetup {
            cell: "identity",
            dgp: &d,
            policy: &ShiftPolicy::identity(),
            estimator: &est,
            replications: 10,
            n: 200,
            seed: 1,
            truth: 0.0,
            execution: Execution::Parallel,
        };
        let (rep, draws) = replicate(&setup).unwrap();
        assert!(draws.iter().all(|d| d.psi_delta.abs() < 1e-8));
        assert_eq!(rep.coverage, 1.0);
        assert_eq!(rep.failures, 0);
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut d = DgpSpec::default();
        d.exposure.coef.pop();
        assert!(d.validate().is_err());
        let mut d = DgpSpec::default();
        d.exposure.sigma = 0.0;
        assert!(d.validate().is_err());
    }
}
