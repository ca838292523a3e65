//! Double machine learning for partially linear models
//! `Y = θ(X)·f(T) + g(X, W)`.
//!
//! Outcome and transformed treatment are residualized on `X ∪ W` with
//! cross-fitted first-stage learners; the effect is then estimated from the
//! out-of-fold residuals, either as a scalar or as a function of `X`.
//! The remainder `g` is recovered by plugging in the first-stage ensembles or
//! by refitting a learner on `Y − θ̂(X)·f(T)`.

mod crossfit;
mod effect;
mod hybrid;

pub use crossfit::{assign_folds, cross_fit, cross_fit_arrays, FoldDiagnostics, PartialOutResult};
pub use effect::{
    default_weight_floor, estimate_constant_effect, estimate_heterogeneous_effect, ConstantEffect, Effect,
    HeterogeneousEffect,
};
pub use hybrid::{
    plugin_g, predict_hybrid, refit_g, DmlSummary, GEstimator, HybridModel, RefitOptions,
};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetError, FluxFrame, RoleSpec};
use crate::learners::LearnerError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DmlError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("{role} learner failed on fold {fold}: {source}")]
    Learner {
        fold: usize,
        role: &'static str,
        #[source]
        source: LearnerError,
    },
    #[error(transparent)]
    Model(#[from] LearnerError),
    #[error("too few rows: {n} rows for {k} folds (need at least {needed})")]
    TooFewRows { n: usize, k: usize, needed: usize },
    #[error("residualized treatment has zero variance; the effect is not identifiable")]
    Unidentifiable,
    #[error("every residualized treatment is below the weight floor")]
    AllWeightsFloored,
    #[error("non-finite value in {what} at row {row}")]
    NonFinite { what: &'static str, row: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// How the effect term and the remainder combine into a prediction of `Y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Composition {
    /// `θ(X)·f(T) + g(X, W)`.
    Additive,
    /// `−θ(X)·f(T) + g(X, W)`; the effect is estimated against `−f(T)` so
    /// `θ` keeps its natural sign (light-use efficiency in NEE partitioning).
    NegatedAdditive,
    /// `g(X, W)·exp(θ·f(T))` for positive `Y`; residualization runs on
    /// `log Y` (the Q10 respiration model with `θ = log Q10`).
    MultiplicativeExp,
}

impl Composition {
    pub fn treatment_sign(self) -> f64 {
        match self {
            Composition::NegatedAdditive => -1.0,
            _ => 1.0,
        }
    }
}

/// How rows are assigned to cross-fitting folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FoldScheme {
    /// Seeded uniform shuffle of row indices.
    Shuffled,
    /// Contiguous blocks in row order, for autocorrelated series.
    TimeBlocked,
    /// Caller-supplied fold id per row.
    Explicit(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmlConfig {
    pub k_folds: usize,
    pub seed: u64,
    pub folds: FoldScheme,
    pub composition: Composition,
}

impl Default for DmlConfig {
    fn default() -> Self {
        Self {
            k_folds: 5,
            seed: 0,
            folds: FoldScheme::Shuffled,
            composition: Composition::Additive,
        }
    }
}

/// Numeric arrays of one DML problem extracted from a frame.
#[derive(Debug, Clone)]
pub struct DmlProblem {
    /// Outcome as residualized (`log Y` for the multiplicative composition).
    pub outcome: Vec<f64>,
    /// Signed transformed treatment `±f(T)`.
    pub treatment: Vec<f64>,
    /// `X ∪ W` in the order of [`RoleSpec::controls`].
    pub controls: Array2<f64>,
    /// Effect modifiers `X`.
    pub modifiers: Array2<f64>,
}

impl DmlProblem {
    pub fn from_frame(frame: &FluxFrame, roles: &RoleSpec, composition: Composition) -> Result<Self, DmlError> {
        roles.validate(Some(frame))?;
        let y = frame.column(&roles.y)?;
        let outcome: Vec<f64> = match composition {
            Composition::MultiplicativeExp => y.iter().map(|v| v.ln()).collect(),
            _ => y.to_vec(),
        };
        if let Some(row) = outcome.iter().position(|v| !v.is_finite()) {
            return Err(DmlError::NonFinite { what: "outcome (log scale needs Y > 0)", row });
        }
        let sign = composition.treatment_sign();
        let treatment: Vec<f64> = roles.f.apply(frame, &roles.t)?.iter().map(|v| sign * v).collect();
        if let Some(row) = treatment.iter().position(|v| !v.is_finite()) {
            return Err(DmlError::NonFinite { what: "transformed treatment", row });
        }
        Ok(Self {
            outcome,
            treatment,
            controls: frame.matrix(&roles.controls())?,
            modifiers: frame.matrix(&roles.x)?,
        })
    }
}
