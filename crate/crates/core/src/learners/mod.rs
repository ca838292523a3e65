//! Regressors behind a single fit/predict contract: linear least squares,
//! gradient-boosted trees, random forests and multilayer perceptrons.

mod adam;
mod forest;
mod gbt;
mod linear;
mod mlp;
mod tree;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use forest::{ForestModel, RfConfig};
pub use gbt::{GbtConfig, GbtModel};
pub use linear::LinearModel;
pub use mlp::{
    mlp_gradient, mlp_loss_and_gradient, sample_mask, softplus, validation_split, BatchSampler, MlpConfig,
    MlpModel, NetworkLayout, OutputActivation, Standardizer, ValidationSplit, Workspace,
};
pub use tree::{DecisionTree, SortedColumns, TreeConfig};

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Version tag written into serialized models.
pub const MODEL_FORMAT_VERSION: u32 = 1;
const MODEL_FORMAT: &str = "chm-model";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LearnerError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid learner configuration: {0}")]
    InvalidConfig(String),
    #[error("expected {expected} features, got {found}")]
    FeatureMismatch { expected: usize, found: usize },
    #[error("training diverged (non-finite parameters) at iteration {iteration}")]
    Diverged { iteration: usize },
    #[error("model serialization: {0}")]
    Serialization(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LearnerKind {
    Linear,
    Gbt(GbtConfig),
    Rf(RfConfig),
    Mlp(MlpConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub kind: LearnerKind,
    pub seed: u64,
}

impl LearnerSpec {
    pub fn linear() -> Self {
        Self { kind: LearnerKind::Linear, seed: 0 }
    }

    pub fn gbt(cfg: GbtConfig) -> Self {
        Self { kind: LearnerKind::Gbt(cfg), seed: 0 }
    }

    pub fn rf(cfg: RfConfig) -> Self {
        Self { kind: LearnerKind::Rf(cfg), seed: 0 }
    }

    pub fn mlp(cfg: MlpConfig) -> Self {
        Self { kind: LearnerKind::Mlp(cfg), seed: 0 }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Short lowercase name of the learner family.
    pub fn name(&self) -> &'static str {
        match self.kind {
            LearnerKind::Linear => "linear",
            LearnerKind::Gbt(_) => "gbt",
            LearnerKind::Rf(_) => "rf",
            LearnerKind::Mlp(_) => "mlp",
        }
    }

    pub fn validate(&self) -> Result<(), LearnerError> {
        let bad = |m: &str| Err(LearnerError::InvalidConfig(m.to_string()));
        match &self.kind {
            LearnerKind::Linear => Ok(()),
            LearnerKind::Gbt(c) => {
                if c.n_stages == 0 || c.max_depth == 0 || c.min_samples_leaf == 0 {
                    return bad("gbt stages, depth and leaf size must be positive");
                }
                if !(c.learning_rate > 0.0 && c.learning_rate <= 1.0) {
                    return bad("gbt learning rate must be in (0, 1]");
                }
                if !(c.subsample > 0.0 && c.subsample <= 1.0) {
                    return bad("gbt subsample must be in (0, 1]");
                }
                if !(0.0..1.0).contains(&c.validation_fraction) {
                    return bad("gbt validation fraction must be in [0, 1)");
                }
                if c.n_iter_no_change == 0 {
                    return bad("gbt n_iter_no_change must be positive");
                }
                Ok(())
            }
            LearnerKind::Rf(c) => {
                if c.n_trees == 0 || c.min_samples_leaf == 0 || c.max_depth == Some(0) {
                    return bad("forest trees, depth and leaf size must be positive");
                }
                if !(c.feature_subsample > 0.0 && c.feature_subsample <= 1.0) {
                    return bad("forest feature subsample must be in (0, 1]");
                }
                Ok(())
            }
            LearnerKind::Mlp(c) => c.validate(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Weighted mean squared error on the rows used for training.
    pub train_loss: f64,
    /// Weighted mean squared error on held-out rows (MLP only).
    pub validation_loss: Option<f64>,
    /// Set when every positively weighted target is identical.
    pub constant_target: bool,
    /// Iteration of the retained MLP snapshot.
    pub best_iteration: Option<usize>,
    /// Training loss after each boosting stage.
    pub stage_losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum ModelState {
    Constant(f64),
    Linear(LinearModel),
    Gbt(GbtModel),
    Rf(ForestModel),
    Mlp(MlpModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    n_features: usize,
    diagnostics: Diagnostics,
    state: ModelState,
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    format: String,
    version: u32,
    model: TrainedModel,
}

fn check_finite(features: ArrayView2<f64>) -> Result<(), LearnerError> {
    if let Some(((i, j), _)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(LearnerError::InvalidInput(format!("non-finite feature at row {i}, column {j}")));
    }
    Ok(())
}

/// Trains `spec` on `features` (n × p) and `targets`. Weights, when given,
/// must be non-negative and not all zero; they are rescaled by their maximum.
pub fn fit(
    spec: &LearnerSpec,
    features: ArrayView2<f64>,
    targets: &[f64],
    weights: Option<&[f64]>,
) -> Result<TrainedModel, LearnerError> {
    spec.validate()?;
    let (n, p) = features.dim();
    if n < 2 {
        return Err(LearnerError::InvalidInput(format!("need at least 2 rows, got {n}")));
    }
    if p == 0 {
        return Err(LearnerError::InvalidInput("need at least one feature".into()));
    }
    if targets.len() != n {
        return Err(LearnerError::InvalidInput(format!("{} targets for {n} rows", targets.len())));
    }
    check_finite(features)?;
    if let Some(i) = targets.iter().position(|v| !v.is_finite()) {
        return Err(LearnerError::InvalidInput(format!("non-finite target at row {i}")));
    }
    let weights: Vec<f64> = match weights {
        None => vec![1.0; n],
        Some(w) => {
            if w.len() != n {
                return Err(LearnerError::InvalidInput(format!("{} weights for {n} rows", w.len())));
            }
            if let Some(i) = w.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(LearnerError::InvalidInput(format!("invalid weight at row {i}")));
            }
            let max = w.iter().copied().fold(0.0, f64::max);
            if max == 0.0 {
                return Err(LearnerError::InvalidInput("all weights are zero".into()));
            }
            w.iter().map(|v| v / max).collect()
        }
    };

    let mut diagnostics = Diagnostics::default();
    let mut active = targets.iter().zip(&weights).filter(|(_, w)| **w > 0.0).map(|(y, _)| *y);
    let first = active.next().unwrap();
    if active.all(|y| y == first) {
        diagnostics.constant_target = true;
        return Ok(TrainedModel { n_features: p, diagnostics, state: ModelState::Constant(first) });
    }

    let columns = || -> Vec<Vec<f64>> { features.columns().into_iter().map(|c| c.to_vec()).collect() };
    let state = match &spec.kind {
        LearnerKind::Linear => ModelState::Linear(LinearModel::fit(features, targets, &weights)?),
        LearnerKind::Gbt(cfg) => {
            let (m, hist) = GbtModel::fit(cfg, columns(), targets, &weights, spec.seed);
            diagnostics.stage_losses = hist;
            if cfg.validation_fraction > 0.0 {
                diagnostics.best_iteration = Some(m.n_stages());
            }
            ModelState::Gbt(m)
        }
        LearnerKind::Rf(cfg) => ModelState::Rf(ForestModel::fit(cfg, columns(), targets, &weights, spec.seed)),
        LearnerKind::Mlp(cfg) => {
            let f = MlpModel::fit(cfg, features, targets, &weights, spec.seed)?;
            diagnostics.train_loss = f.train_loss;
            diagnostics.validation_loss = f.validation_loss;
            diagnostics.best_iteration = Some(f.best_iteration);
            ModelState::Mlp(f.model)
        }
    };
    let mut model = TrainedModel { n_features: p, diagnostics, state };
    if !matches!(spec.kind, LearnerKind::Mlp(_)) {
        let pred = model.predict_unchecked(features);
        let sw: f64 = weights.iter().sum();
        model.diagnostics.train_loss =
            pred.iter().zip(targets).zip(&weights).map(|((p, y), w)| w * (p - y).powi(2)).sum::<f64>() / sw;
    }
    Ok(model)
}

impl TrainedModel {
    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn diagnostics(&self) -> &Diagnostics {
        &self.diagnostics
    }

    pub fn predict(&self, features: ArrayView2<f64>) -> Result<Vec<f64>, LearnerError> {
        if features.ncols() != self.n_features {
            return Err(LearnerError::FeatureMismatch { expected: self.n_features, found: features.ncols() });
        }
        check_finite(features)?;
        Ok(self.predict_unchecked(features))
    }

    fn predict_unchecked(&self, features: ArrayView2<f64>) -> Vec<f64> {
        let per_row = |f: &dyn Fn(&[f64]) -> f64| -> Vec<f64> {
            let mut buf = vec![0.0; self.n_features];
            features
                .outer_iter()
                .map(|row| {
                    buf.iter_mut().zip(row).for_each(|(b, v)| *b = *v);
                    f(&buf)
                })
                .collect()
        };
        match &self.state {
            ModelState::Constant(v) => vec![*v; features.nrows()],
            ModelState::Linear(m) => per_row(&|r| m.predict_row(r)),
            ModelState::Gbt(m) => per_row(&|r| m.predict_row(r)),
            ModelState::Rf(m) => per_row(&|r| m.predict_row(r)),
            ModelState::Mlp(m) => m.predict(features),
        }
    }

    /// Self-describing JSON with a format tag and version.
    pub fn to_json(&self) -> Result<String, LearnerError> {
        let env = Envelope { format: MODEL_FORMAT.into(), version: MODEL_FORMAT_VERSION, model: self.clone() };
        serde_json::to_string(&env).map_err(|e| LearnerError::Serialization(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, LearnerError> {
        let env: Envelope = serde_json::from_str(text).map_err(|e| LearnerError::Serialization(e.to_string()))?;
        if env.format != MODEL_FORMAT {
            return Err(LearnerError::Serialization(format!("unknown format {:?}", env.format)));
        }
        if env.version != MODEL_FORMAT_VERSION {
            return Err(LearnerError::Serialization(format!("unsupported version {}", env.version)));
        }
        Ok(env.model)
    }
}
