//! Affine map of a bounded outcome onto `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{MtpError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeScaler {
    y_min: f64,
    y_max: f64,
}

impl OutcomeScaler {
    pub fn new(y_min: f64, y_max: f64) -> Result<Self> {
        if !(y_min.is_finite() && y_max.is_finite() && y_min < y_max) {
            return Err(MtpError::InvalidFrame(format!(
                "outcome bounds must satisfy min < max, got ({y_min}, {y_max})"
            )));
        }
        Ok(OutcomeScaler { y_min, y_max })
    }

    pub fn y_min(&self) -> f64 {
        self.y_min
    }

    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn range(&self) -> f64 {
        self.y_max - self.y_min
    }

    /// Values outside the bounds are clamped onto `[0, 1]`.
    pub fn scale(&self, y: f64) -> f64 {
        ((y - self.y_min) / self.range()).clamp(0.0, 1.0)
    }

    pub fn unscale(&self, s: f64) -> f64 {
        self.y_min + s * self.range()
    }

    pub fn scale_all(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|&v| self.scale(v)).collect()
    }

    pub fn unscale_all(&self, s: &[f64]) -> Vec<f64> {
        s.iter().map(|&v| self.unscale(v)).collect()
    }
}

/// Use the declared bounds when given, else the observed range of `y`.
pub fn fit_scaler(y: &[f64], declared_bounds: Option<(f64, f64)>) -> Result<OutcomeScaler> {
    if let Some((lo, hi)) = declared_bounds {
        return OutcomeScaler::new(lo, hi);
    }
    let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lo < hi) {
        return Err(MtpError::DegenerateOutcome(lo));
    }
    OutcomeScaler::new(lo, hi)
}
