//! Shift policies acting on a continuous exposure.

use serde::{Deserialize, Serialize};

use crate::error::{MtpError, Result};

/// The deterministic shift rule applied to each unit's natural exposure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ShiftKind {
    /// `a + c`
    Additive(f64),
    /// `k * a`, with `k > 0`
    Multiplicative(f64),
}

/// A shift rule plus optional clamp bounds (index limits).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftPolicy {
    pub kind: ShiftKind,
    #[serde(default)]
    pub clamp_lo: Option<f64>,
    #[serde(default)]
    pub clamp_hi: Option<f64>,
}

impl ShiftPolicy {
    pub fn additive(c: f64) -> Result<Self> {
        Self::new(ShiftKind::Additive(c), None, None)
    }

    pub fn multiplicative(k: f64) -> Result<Self> {
        Self::new(ShiftKind::Multiplicative(k), None, None)
    }

    pub fn identity() -> Self {
        ShiftPolicy {
            kind: ShiftKind::Multiplicative(1.0),
            clamp_lo: None,
            clamp_hi: None,
        }
    }

    pub fn new(kind: ShiftKind, clamp_lo: Option<f64>, clamp_hi: Option<f64>) -> Result<Self> {
        let p = ShiftPolicy {
            kind,
            clamp_lo,
            clamp_hi,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_bounds(self, clamp_lo: Option<f64>, clamp_hi: Option<f64>) -> Result<Self> {
        Self::new(self.kind, clamp_lo, clamp_hi)
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ShiftKind::Additive(c) if !c.is_finite() => {
                return Err(MtpError::InvalidPolicy(format!("additive shift {c} is not finite")))
            }
            ShiftKind::Multiplicative(k) if !(k.is_finite() && k > 0.0) => {
                return Err(MtpError::InvalidPolicy(format!(
                    "multiplicative factor must be positive, got {k}"
                )))
            }
            _ => {}
        }
        for b in [self.clamp_lo, self.clamp_hi].into_iter().flatten() {
            if !b.is_finite() {
                return Err(MtpError::InvalidPolicy(format!("clamp bound {b} is not finite")));
            }
        }
        if let (Some(lo), Some(hi)) = (self.clamp_lo, self.clamp_hi) {
            if lo >= hi {
                return Err(MtpError::InvalidPolicy(format!(
                    "clamp_lo ({lo}) must be below clamp_hi ({hi})"
                )));
            }
        }
        Ok(())
    }

    /// Additive 0 or multiplicative 1.
    pub fn is_identity_rule(&self) -> bool {
        match self.kind {
            ShiftKind::Additive(c) => c == 0.0,
            ShiftKind::Multiplicative(k) => k == 1.0,
        }
    }

    /// Short labels for result tables: (`"additive"`, 2.0) etc.
    pub fn kind_label(&self) -> &'static str {
        match self.kind {
            ShiftKind::Additive(_) => "additive",
            ShiftKind::Multiplicative(_) => "multiplicative",
        }
    }

    pub fn value(&self) -> f64 {
        match self.kind {
            ShiftKind::Additive(c) => c,
            ShiftKind::Multiplicative(k) => k,
        }
    }

    /// Distance of the rule from the identity, used to order candidate shifts.
    pub fn intensity(&self) -> f64 {
        match self.kind {
            ShiftKind::Additive(c) => c.abs(),
            ShiftKind::Multiplicative(k) => k.ln().abs(),
        }
    }

    fn raw(&self, a: f64) -> f64 {
        match self.kind {
            ShiftKind::Additive(c) => a + c,
            ShiftKind::Multiplicative(k) => k * a,
        }
    }

    fn clamp(&self, v: f64) -> f64 {
        let v = match self.clamp_lo {
            Some(lo) if v < lo => lo,
            _ => v,
        };
        match self.clamp_hi {
            Some(hi) if v > hi => hi,
            _ => v,
        }
    }
}

/// Shifted exposure `clamp(d(a))`.
pub fn apply_shift(policy: &ShiftPolicy, a: f64) -> f64 {
    policy.clamp(policy.raw(a))
}

/// Shifted exposures for a whole vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedExposure {
    pub values: Vec<f64>,
    /// Units whose raw shifted value fell outside a clamp bound.
    pub truncated: usize,
}

pub fn shift_exposures(a: &[f64], policy: &ShiftPolicy) -> ShiftedExposure {
    let mut truncated = 0;
    let values = a
        .iter()
        .map(|&x| {
            let raw = policy.raw(x);
            let v = policy.clamp(raw);
            if v != raw {
                truncated += 1;
            }
            v
        })
        .collect();
    ShiftedExposure { values, truncated }
}

/// Elementwise shift of a frame's exposure column.
pub fn shift_frame(frame: &crate::frame::AnalysisFrame, policy: &ShiftPolicy) -> ShiftedExposure {
    shift_exposures(frame.exposure(), policy)
}
