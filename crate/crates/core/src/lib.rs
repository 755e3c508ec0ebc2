//! Estimation of shift-policy effects on a continuous exposure.
//!
//! The pipeline: shift each unit's exposure with a [`ShiftPolicy`], estimate
//! the density ratio of shifted to natural exposures by classifying stacked
//! natural/shifted copies, fit the outcome regression with a Super Learner
//! ensemble, target it with a weighted logistic fluctuation, and report the
//! difference from the observed mean with influence-curve Wald intervals.
//! [`panel`] turns county-level CSV panels into a grid of weekly analyses and
//! [`sim`] provides known-truth data-generating processes.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod density_ratio;
pub mod error;
pub mod estimate;
pub mod frame;
pub mod learners;
pub mod linalg;
pub mod panel;
pub mod par;
pub mod policy;
pub mod rng;
pub mod scaler;
pub mod sim;
pub mod super_learner;
pub mod tmle;

pub use error::{MtpError, Result};
pub use estimate::ShiftEstimate;
pub use frame::AnalysisFrame;
pub use learners::{LearnerSpec, Task};
pub use par::Execution;
pub use policy::{apply_shift, shift_frame, ShiftKind, ShiftPolicy};
pub use scaler::{fit_scaler, OutcomeScaler};
