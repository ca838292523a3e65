use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::{DmlError, PartialOutResult};
use crate::learners::{fit, LearnerSpec, TrainedModel};

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.96;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantEffect {
    pub theta: f64,
    pub std_error: f64,
    pub ci_95: (f64, f64),
    pub n_used: usize,
    /// corr(y_res − θ̂·t_res, t_res); reported, not enforced.
    pub residual_correlation: f64,
}

/// `θ̂ = Σ t_res·y_res / Σ t_res²` with the heteroscedasticity-robust standard
/// error `√(Σ t_res²·ê²) / Σ t_res²`.
pub fn estimate_constant_effect(po: &PartialOutResult) -> Result<ConstantEffect, DmlError> {
    constant_effect_from_residuals(&po.y_res, &po.t_res)
}

pub(crate) fn constant_effect_from_residuals(y_res: &[f64], t_res: &[f64]) -> Result<ConstantEffect, DmlError> {
    let stt: f64 = t_res.iter().map(|t| t * t).sum();
    if !(stt > 0.0) {
        return Err(DmlError::Unidentifiable);
    }
    let sty: f64 = t_res.iter().zip(y_res).map(|(t, y)| t * y).sum();
    let theta = sty / stt;
    let meat: f64 = t_res
        .iter()
        .zip(y_res)
        .map(|(t, y)| {
            let e = y - theta * t;
            t * t * e * e
        })
        .sum();
    let std_error = meat.sqrt() / stt;
    Ok(ConstantEffect {
        theta,
        std_error,
        ci_95: (theta - Z95 * std_error, theta + Z95 * std_error),
        n_used: t_res.len(),
        residual_correlation: correlation(
            &y_res.iter().zip(t_res).map(|(y, t)| y - theta * t).collect::<Vec<_>>(),
            t_res,
        ),
    })
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa > 0.0 && sbb > 0.0 {
        sab / (saa * sbb).sqrt()
    } else {
        0.0
    }
}

/// `θ(X)` fitted by weighted regression of `y_res / t_res` on `X` with
/// weights `t_res²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeterogeneousEffect {
    pub model: TrainedModel,
    pub x_columns: Vec<String>,
    pub weight_floor: f64,
    /// Rows whose |t_res| was raised to the floor.
    pub n_floored: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Effect {
    Constant(ConstantEffect),
    Heterogeneous(HeterogeneousEffect),
}

impl Effect {
    /// `θ̂` for each row of the effect-modifier matrix.
    pub fn theta(&self, x: ArrayView2<f64>) -> Result<Vec<f64>, DmlError> {
        match self {
            Effect::Constant(c) => Ok(vec![c.theta; x.nrows()]),
            Effect::Heterogeneous(h) => Ok(h.model.predict(x)?),
        }
    }
}

/// `1e-3 · sd(t_res)`.
pub fn default_weight_floor(t_res: &[f64]) -> f64 {
    let n = t_res.len() as f64;
    let m = t_res.iter().sum::<f64>() / n;
    let var = t_res.iter().map(|t| (t - m).powi(2)).sum::<f64>() / n;
    1e-3 * var.sqrt()
}

/// Minimizes `Σ (y_res − θ(X)·t_res)²` over the final learner's class via the
/// equivalent weighted problem `Σ t_res²·(y_res/t_res − θ(X))²`. Rows with
/// `|t_res|` below `weight_floor` use the floor (same sign) in both the
/// pseudo-target and the weight.
pub fn estimate_heterogeneous_effect(
    po: &PartialOutResult,
    x: ArrayView2<f64>,
    x_columns: &[String],
    final_learner: &LearnerSpec,
    weight_floor: Option<f64>,
) -> Result<HeterogeneousEffect, DmlError> {
    let n = po.t_res.len();
    if x.nrows() != n {
        return Err(DmlError::InvalidConfig(format!("{} modifier rows for {n} residuals", x.nrows())));
    }
    if x.ncols() == 0 {
        return Err(DmlError::InvalidConfig("heterogeneous effect needs at least one X column".into()));
    }
    let floor = weight_floor.unwrap_or_else(|| default_weight_floor(&po.t_res));
    if !(floor > 0.0) {
        return Err(DmlError::Unidentifiable);
    }
    let mut pseudo = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    let mut n_floored = 0;
    for (&y, &t) in po.y_res.iter().zip(&po.t_res) {
        let t_eff = if t.abs() < floor {
            n_floored += 1;
            if t < 0.0 {
                -floor
            } else {
                floor
            }
        } else {
            t
        };
        pseudo.push(y / t_eff);
        weights.push(t_eff * t_eff);
    }
    if n_floored == n {
        return Err(DmlError::AllWeightsFloored);
    }
    let model = fit(final_learner, x, &pseudo, Some(&weights))?;
    Ok(HeterogeneousEffect {
        model,
        x_columns: x_columns.to_vec(),
        weight_floor: floor,
        n_floored,
    })
}
