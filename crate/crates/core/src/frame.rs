//! One cross-sectional slice of observed data `(W, A, Y)`.

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{MtpError, Result};

/// Covariates `W` (n × p), exposure `A` and outcome `Y` for `n` units.
///
/// `p = 0` is the unadjusted analysis. All entries are finite; missing
/// values must be filtered out before a frame is built.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisFrame {
    unit_ids: Vec<String>,
    covariate_names: Vec<String>,
    covariates: Array2<f64>,
    exposure: Vec<f64>,
    outcome: Vec<f64>,
}

impl AnalysisFrame {
    pub fn new(
        unit_ids: Vec<String>,
        covariate_names: Vec<String>,
        covariates: Array2<f64>,
        exposure: Vec<f64>,
        outcome: Vec<f64>,
    ) -> Result<Self> {
        let n = exposure.len();
        if n < 2 {
            return Err(MtpError::InvalidFrame(format!("need at least 2 units, got {n}")));
        }
        if outcome.len() != n || unit_ids.len() != n || covariates.nrows() != n {
            return Err(MtpError::InvalidFrame(format!(
                "length mismatch: ids {}, W rows {}, A {}, Y {}",
                unit_ids.len(),
                covariates.nrows(),
                n,
                outcome.len()
            )));
        }
        if covariate_names.len() != covariates.ncols() {
            return Err(MtpError::InvalidFrame(format!(
                "{} covariate names for {} columns",
                covariate_names.len(),
                covariates.ncols()
            )));
        }
        if let Some(i) = exposure.iter().position(|v| !v.is_finite()) {
            return Err(MtpError::InvalidFrame(format!("non-finite exposure at row {i}")));
        }
        if let Some(i) = outcome.iter().position(|v| !v.is_finite()) {
            return Err(MtpError::InvalidFrame(format!("non-finite outcome at row {i}")));
        }
        if covariates.iter().any(|v| !v.is_finite()) {
            return Err(MtpError::InvalidFrame("non-finite covariate value".into()));
        }
        Ok(AnalysisFrame {
            unit_ids,
            covariate_names,
            covariates,
            exposure,
            outcome,
        })
    }

    /// Frame with generated unit ids and covariate names `w1..wp`.
    pub fn from_arrays(covariates: Array2<f64>, exposure: Vec<f64>, outcome: Vec<f64>) -> Result<Self> {
        let ids = (0..exposure.len()).map(|i| i.to_string()).collect();
        let names = (1..=covariates.ncols()).map(|j| format!("w{j}")).collect();
        Self::new(ids, names, covariates, exposure, outcome)
    }

    pub fn n(&self) -> usize {
        self.exposure.len()
    }

    pub fn p(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn covariates(&self) -> ArrayView2<'_, f64> {
        self.covariates.view()
    }

    pub fn exposure(&self) -> &[f64] {
        &self.exposure
    }

    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }

    /// Same units and `(A, Y)`, no covariates.
    pub fn unadjusted(&self) -> AnalysisFrame {
        AnalysisFrame {
            unit_ids: self.unit_ids.clone(),
            covariate_names: Vec::new(),
            covariates: Array2::zeros((self.n(), 0)),
            exposure: self.exposure.clone(),
            outcome: self.outcome.clone(),
        }
    }

    /// Feature matrix `[a | W]` with the given exposure in column 0.
    pub fn features_with(&self, exposure: &[f64]) -> Array2<f64> {
        debug_assert_eq!(exposure.len(), self.n());
        let a = ndarray::ArrayView1::from(exposure).insert_axis(Axis(1));
        ndarray::concatenate(Axis(1), &[a, self.covariates.view()]).expect("row counts agree")
    }
}
