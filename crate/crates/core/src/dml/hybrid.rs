use std::fmt::Write as _;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::{Composition, DmlError, Effect, FoldDiagnostics, PartialOutResult};
use crate::dataset::{FluxFrame, RoleSpec};
use crate::learners::{fit, LearnerSpec, TrainedModel};

/// Estimator of the remainder `g(X, W)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GEstimator {
    /// `Ê[Y|X,W] − θ̂(X)·Ê[f(T)|X,W]` from the fold-averaged first stages.
    PlugIn {
        y_models: Vec<TrainedModel>,
        t_models: Vec<TrainedModel>,
        effect: Effect,
    },
    /// A learner fitted on `Y − θ̂(X)·f(T)` (or `Y / exp(θ̂·f(T))`).
    Refit {
        model: TrainedModel,
        predictor_columns: Vec<String>,
    },
}

fn ensemble_mean(models: &[TrainedModel], x: ArrayView2<f64>) -> Result<Vec<f64>, DmlError> {
    let mut acc = vec![0.0; x.nrows()];
    for m in models {
        for (a, p) in acc.iter_mut().zip(m.predict(x)?) {
            *a += p;
        }
    }
    let k = models.len() as f64;
    acc.iter_mut().for_each(|a| *a /= k);
    Ok(acc)
}

fn plugin_from_models(
    y_models: &[TrainedModel],
    t_models: &[TrainedModel],
    effect: &Effect,
    modifiers: ArrayView2<f64>,
    controls: ArrayView2<f64>,
) -> Result<Vec<f64>, DmlError> {
    let ey = ensemble_mean(y_models, controls)?;
    let et = ensemble_mean(t_models, controls)?;
    let theta = effect.theta(modifiers)?;
    Ok(ey.iter().zip(&et).zip(&theta).map(|((y, t), th)| y - th * t).collect())
}

/// Plug-in remainder on the residualized scale for the rows of `modifiers`
/// (X) and `controls` (X ∪ W), reusing every fold model of `po`.
pub fn plugin_g(
    po: &PartialOutResult,
    effect: &Effect,
    modifiers: ArrayView2<f64>,
    controls: ArrayView2<f64>,
) -> Result<Vec<f64>, DmlError> {
    plugin_from_models(&po.y_models, &po.t_models, effect, modifiers, controls)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefitOptions {
    pub learner: LearnerSpec,
    /// Predictors beyond `X ∪ W`, e.g. the treatment column itself.
    pub extra_predictors: Vec<String>,
    pub composition: Composition,
}

fn signed_treatment(frame: &FluxFrame, roles: &RoleSpec, composition: Composition) -> Result<Vec<f64>, DmlError> {
    let s = composition.treatment_sign();
    Ok(roles.f.apply(frame, &roles.t)?.iter().map(|v| s * v).collect())
}

/// Fits `opts.learner` on the outcome with the estimated effect removed.
pub fn refit_g(frame: &FluxFrame, roles: &RoleSpec, effect: &Effect, opts: &RefitOptions) -> Result<GEstimator, DmlError> {
    roles.validate(Some(frame))?;
    let ft = signed_treatment(frame, roles, opts.composition)?;
    let theta = effect.theta(frame.matrix(&roles.x)?.view())?;
    let y = frame.column(&roles.y)?;
    let targets: Vec<f64> = match opts.composition {
        Composition::MultiplicativeExp => {
            y.iter().zip(&ft).zip(&theta).map(|((y, f), th)| y / (th * f).exp()).collect()
        }
        _ => y.iter().zip(&ft).zip(&theta).map(|((y, f), th)| y - th * f).collect(),
    };
    if let Some(row) = targets.iter().position(|v| !v.is_finite()) {
        return Err(DmlError::NonFinite { what: "refit target", row });
    }
    let mut predictor_columns = roles.controls();
    for c in &opts.extra_predictors {
        if !predictor_columns.contains(c) {
            predictor_columns.push(c.clone());
        }
    }
    let model = fit(&opts.learner, frame.matrix(&predictor_columns)?.view(), &targets, None)?;
    Ok(GEstimator::Refit { model, predictor_columns })
}

/// Effect, remainder and how they combine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridModel {
    pub effect: Effect,
    pub g: GEstimator,
    pub roles: RoleSpec,
    pub composition: Composition,
}

impl HybridModel {
    /// Hybrid model whose remainder is the plug-in estimator of `po`.
    pub fn plug_in(po: &PartialOutResult, effect: Effect, roles: RoleSpec, composition: Composition) -> Self {
        let g = GEstimator::PlugIn {
            y_models: po.y_models.clone(),
            t_models: po.t_models.clone(),
            effect: effect.clone(),
        };
        Self { effect, g, roles, composition }
    }

    /// `θ̂(X)` per row of `frame`.
    pub fn theta(&self, frame: &FluxFrame) -> Result<Vec<f64>, DmlError> {
        self.effect.theta(frame.matrix(&self.roles.x)?.view())
    }

    /// The effect term `θ̂(X)·f(T)` with `f` as configured (unsigned).
    pub fn effect_term(&self, frame: &FluxFrame) -> Result<Vec<f64>, DmlError> {
        let f = self.roles.f.apply(frame, &self.roles.t)?;
        Ok(self.theta(frame)?.iter().zip(&f).map(|(t, f)| t * f).collect())
    }

    /// `ĝ(X, W)` on the scale of `Y`.
    pub fn g(&self, frame: &FluxFrame) -> Result<Vec<f64>, DmlError> {
        match &self.g {
            GEstimator::PlugIn { y_models, t_models, effect } => {
                let x = frame.matrix(&self.roles.x)?;
                let c = frame.matrix(&self.roles.controls())?;
                let g = plugin_from_models(y_models, t_models, effect, x.view(), c.view())?;
                Ok(match self.composition {
                    // residualization ran on log Y
                    Composition::MultiplicativeExp => g.iter().map(|v| v.exp()).collect(),
                    _ => g,
                })
            }
            GEstimator::Refit { model, predictor_columns } => {
                Ok(model.predict(frame.matrix(predictor_columns)?.view())?)
            }
        }
    }
}

/// Predicted outcome for every row of `frame`.
pub fn predict_hybrid(model: &HybridModel, frame: &FluxFrame) -> Result<Vec<f64>, DmlError> {
    let ft = signed_treatment(frame, &model.roles, model.composition)?;
    let theta = model.theta(frame)?;
    let g = model.g(frame)?;
    Ok(match model.composition {
        Composition::MultiplicativeExp => {
            g.iter().zip(&ft).zip(&theta).map(|((g, f), th)| g * (th * f).exp()).collect()
        }
        _ => g.iter().zip(&ft).zip(&theta).map(|((g, f), th)| th * f + g).collect(),
    })
}

/// Version of the text record written by [`DmlSummary::to_record`].
pub const SUMMARY_RECORD_VERSION: u32 = 1;

/// Scalar-effect summary with fold diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmlSummary {
    pub theta: f64,
    pub std_error: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n: usize,
    pub k_folds: usize,
    pub mean_y_res: f64,
    pub mean_t_res: f64,
    pub residual_correlation: f64,
    pub folds: Vec<FoldDiagnostics>,
}

impl DmlSummary {
    pub fn new(po: &PartialOutResult, effect: &super::ConstantEffect) -> Self {
        Self {
            theta: effect.theta,
            std_error: effect.std_error,
            ci_lo: effect.ci_95.0,
            ci_hi: effect.ci_95.1,
            n: effect.n_used,
            k_folds: po.k_folds(),
            mean_y_res: po.mean_y_res(),
            mean_t_res: po.mean_t_res(),
            residual_correlation: effect.residual_correlation,
            folds: po.folds.clone(),
        }
    }

    /// `key=value` lines, one per field, fold diagnostics as `fold.<i>.<key>`.
    pub fn to_record(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "record=dml-summary");
        let _ = writeln!(s, "version={SUMMARY_RECORD_VERSION}");
        for (k, v) in [
            ("theta", self.theta),
            ("std_error", self.std_error),
            ("ci_lo", self.ci_lo),
            ("ci_hi", self.ci_hi),
        ] {
            let _ = writeln!(s, "{k}={v}");
        }
        let _ = writeln!(s, "n={}", self.n);
        let _ = writeln!(s, "k_folds={}", self.k_folds);
        let _ = writeln!(s, "mean_y_res={}", self.mean_y_res);
        let _ = writeln!(s, "mean_t_res={}", self.mean_t_res);
        let _ = writeln!(s, "residual_correlation={}", self.residual_correlation);
        for f in &self.folds {
            let i = f.fold;
            let _ = writeln!(s, "fold.{i}.n_train={}", f.n_train);
            let _ = writeln!(s, "fold.{i}.n_test={}", f.n_test);
            let _ = writeln!(s, "fold.{i}.y_train_loss={}", f.y_train_loss);
            let _ = writeln!(s, "fold.{i}.t_train_loss={}", f.t_train_loss);
            let _ = writeln!(s, "fold.{i}.y_test_mse={}", f.y_test_mse);
            let _ = writeln!(s, "fold.{i}.t_test_mse={}", f.t_test_mse);
        }
        s
    }
}
