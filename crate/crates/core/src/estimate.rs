use serde::{Deserialize, Serialize};

/// Result of one shift analysis: the shift parameter, the observed mean,
/// their difference with Wald inference, and positivity diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftEstimate {
    pub psi_shift: f64,
    pub psi_observed: f64,
    pub psi_delta: f64,
    pub std_err: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub max_density_ratio: f64,
    pub mean_density_ratio: f64,
    pub score_residual: f64,
    pub epsilon: f64,
    pub n: usize,
    pub truncated_shift_count: usize,
    /// Share of shifted exposures outside the observed exposure range.
    pub extrapolated_fraction: f64,
}

impl ShiftEstimate {
    /// `psi_delta` is always computed here from its two parts.
    pub(crate) fn from_parts(psi_shift: f64, psi_observed: f64, std_err: f64) -> Self {
        let psi_delta = psi_shift - psi_observed;
        let half = crate::tmle::Z_975 * std_err;
        ShiftEstimate {
            psi_shift,
            psi_observed,
            psi_delta,
            std_err,
            ci_lo: psi_delta - half,
            ci_hi: psi_delta + half,
            max_density_ratio: f64::NAN,
            mean_density_ratio: f64::NAN,
            score_residual: 0.0,
            epsilon: 0.0,
            n: 0,
            truncated_shift_count: 0,
            extrapolated_fraction: 0.0,
        }
    }

    pub fn covers(&self, truth: f64) -> bool {
        self.ci_lo <= truth && truth <= self.ci_hi
    }
}
