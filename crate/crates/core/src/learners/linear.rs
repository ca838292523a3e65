//! Weighted least squares with an intercept.

use nalgebra::{DMatrix, DVector};
use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::LearnerError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl LinearModel {
    /// Minimum-norm solution of the sqrt-weighted system via SVD, with columns
    /// centered on their weighted means so the intercept is well conditioned.
    pub(crate) fn fit(features: ArrayView2<f64>, targets: &[f64], weights: &[f64]) -> Result<Self, LearnerError> {
        let (n, p) = features.dim();
        let sw: f64 = weights.iter().sum();
        let mut xm = vec![0.0; p];
        for (row, &w) in features.outer_iter().zip(weights) {
            for (m, v) in xm.iter_mut().zip(row) {
                *m += w * v;
            }
        }
        xm.iter_mut().for_each(|m| *m /= sw);
        let ym = weights.iter().zip(targets).map(|(w, y)| w * y).sum::<f64>() / sw;

        let a = DMatrix::from_fn(n, p, |i, j| weights[i].sqrt() * (features[[i, j]] - xm[j]));
        let b = DVector::from_fn(n, |i, _| weights[i].sqrt() * (targets[i] - ym));
        let coefficients: Vec<f64> = if p == 0 {
            Vec::new()
        } else {
            let svd = a.svd(true, true);
            let tol = svd.singular_values.max() * (n.max(p) as f64) * f64::EPSILON;
            svd.solve(&b, tol)
                .map_err(|e| LearnerError::InvalidInput(format!("least squares failed: {e}")))?
                .iter()
                .copied()
                .collect()
        };
        let intercept = ym - coefficients.iter().zip(&xm).map(|(c, m)| c * m).sum::<f64>();
        Ok(Self { intercept, coefficients })
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(row).map(|(c, x)| c * x).sum::<f64>()
    }
}
