use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DmlConfig, DmlError, DmlProblem, FoldScheme};
use crate::dataset::{FluxFrame, RoleSpec};
use crate::learners::{fit, LearnerSpec, TrainedModel};
use crate::seed::{derive_seed, rng, tag};

/// Out-of-fold residuals and the per-fold first-stage models.
#[derive(Debug, Clone)]
pub struct PartialOutResult {
    pub y_res: Vec<f64>,
    pub t_res: Vec<f64>,
    /// Out-of-fold predictions `Ê[Y|X,W]` and `Ê[f(T)|X,W]`.
    pub y_hat: Vec<f64>,
    pub t_hat: Vec<f64>,
    pub fold_assignment: Vec<usize>,
    pub y_models: Vec<TrainedModel>,
    pub t_models: Vec<TrainedModel>,
    pub folds: Vec<FoldDiagnostics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldDiagnostics {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub y_train_loss: f64,
    pub t_train_loss: f64,
    /// Mean squared out-of-fold residuals.
    pub y_test_mse: f64,
    pub t_test_mse: f64,
}

impl PartialOutResult {
    pub fn k_folds(&self) -> usize {
        self.y_models.len()
    }

    pub fn mean_y_res(&self) -> f64 {
        self.y_res.iter().sum::<f64>() / self.y_res.len() as f64
    }

    pub fn mean_t_res(&self) -> f64 {
        self.t_res.iter().sum::<f64>() / self.t_res.len() as f64
    }
}

/// Fold id per row. Shuffled folds split a seeded permutation into `k`
/// near-equal consecutive chunks; time-blocked folds do the same without
/// shuffling.
pub fn assign_folds(n: usize, k: usize, scheme: &FoldScheme, seed: u64) -> Result<Vec<usize>, DmlError> {
    if k < 2 {
        return Err(DmlError::InvalidConfig(format!("need at least 2 folds, got {k}")));
    }
    if n < 2 * k {
        return Err(DmlError::TooFewRows { n, k, needed: 2 * k });
    }
    let chunk = |pos: usize| pos * k / n;
    Ok(match scheme {
        FoldScheme::TimeBlocked => (0..n).map(chunk).collect(),
        FoldScheme::Shuffled => {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng(seed));
            let mut folds = vec![0; n];
            for (pos, &row) in perm.iter().enumerate() {
                folds[row] = chunk(pos);
            }
            folds
        }
        FoldScheme::Explicit(f) => {
            if f.len() != n {
                return Err(DmlError::InvalidConfig(format!("{} fold ids for {n} rows", f.len())));
            }
            for fold in 0..k {
                let count = f.iter().filter(|&&v| v == fold).count();
                if count == 0 || n - count < 2 {
                    return Err(DmlError::InvalidConfig(format!("fold {fold} is empty or covers all rows")));
                }
            }
            if let Some(&bad) = f.iter().find(|&&v| v >= k) {
                return Err(DmlError::InvalidConfig(format!("fold id {bad} out of range for {k} folds")));
            }
            f.clone()
        }
    })
}

/// Residualizes the outcome and treatment of `roles` on `X ∪ W`.
pub fn cross_fit(
    frame: &FluxFrame,
    roles: &RoleSpec,
    y_learner: &LearnerSpec,
    t_learner: &LearnerSpec,
    cfg: &DmlConfig,
) -> Result<(DmlProblem, PartialOutResult), DmlError> {
    let problem = DmlProblem::from_frame(frame, roles, cfg.composition)?;
    let po = cross_fit_arrays(&problem.outcome, &problem.treatment, problem.controls.view(), y_learner, t_learner, cfg)?;
    Ok((problem, po))
}

/// Array form of [`cross_fit`]. Each fold's learners get their own seed
/// derived from the learner seed, the configuration seed and the fold id.
pub fn cross_fit_arrays(
    y: &[f64],
    t: &[f64],
    controls: ArrayView2<f64>,
    y_learner: &LearnerSpec,
    t_learner: &LearnerSpec,
    cfg: &DmlConfig,
) -> Result<PartialOutResult, DmlError> {
    let n = y.len();
    if t.len() != n || controls.nrows() != n {
        return Err(DmlError::InvalidConfig("outcome, treatment and controls differ in length".into()));
    }
    let k = cfg.k_folds;
    let folds = assign_folds(n, k, &cfg.folds, derive_seed(cfg.seed, &[tag("folds")]))?;

    let fitted: Vec<_> = (0..k)
        .into_par_iter()
        .map(|fold| -> Result<_, DmlError> {
            let train: Vec<usize> = (0..n).filter(|&i| folds[i] != fold).collect();
            let test: Vec<usize> = (0..n).filter(|&i| folds[i] == fold).collect();
            let xs = controls.select(Axis(0), &train);
            let xt = controls.select(Axis(0), &test);
            let pick = |v: &[f64]| train.iter().map(|&i| v[i]).collect::<Vec<_>>();
            let ys = y_learner.clone().with_seed(derive_seed(y_learner.seed, &[cfg.seed, fold as u64, 0]));
            let ts = t_learner.clone().with_seed(derive_seed(t_learner.seed, &[cfg.seed, fold as u64, 1]));
            let ym = fit(&ys, xs.view(), &pick(y), None).map_err(|source| DmlError::Learner { fold, role: "outcome", source })?;
            let tm = fit(&ts, xs.view(), &pick(t), None).map_err(|source| DmlError::Learner { fold, role: "treatment", source })?;
            let yp = ym.predict(xt.view()).map_err(|source| DmlError::Learner { fold, role: "outcome", source })?;
            let tp = tm.predict(xt.view()).map_err(|source| DmlError::Learner { fold, role: "treatment", source })?;
            Ok((fold, train.len(), test, ym, tm, yp, tp))
        })
        .collect::<Result<_, _>>()?;

    let mut po = PartialOutResult {
        y_res: vec![0.0; n],
        t_res: vec![0.0; n],
        y_hat: vec![0.0; n],
        t_hat: vec![0.0; n],
        fold_assignment: folds,
        y_models: Vec::with_capacity(k),
        t_models: Vec::with_capacity(k),
        folds: Vec::with_capacity(k),
    };
    for (fold, n_train, test, ym, tm, yp, tp) in fitted {
        let (mut ymse, mut tmse) = (0.0, 0.0);
        for (j, &i) in test.iter().enumerate() {
            po.y_hat[i] = yp[j];
            po.t_hat[i] = tp[j];
            po.y_res[i] = y[i] - yp[j];
            po.t_res[i] = t[i] - tp[j];
            ymse += po.y_res[i].powi(2);
            tmse += po.t_res[i].powi(2);
        }
        po.folds.push(FoldDiagnostics {
            fold,
            n_train,
            n_test: test.len(),
            y_train_loss: ym.diagnostics().train_loss,
            t_train_loss: tm.diagnostics().train_loss,
            y_test_mse: ymse / test.len() as f64,
            t_test_mse: tmse / test.len() as f64,
        });
        po.y_models.push(ym);
        po.t_models.push(tm);
    }
    Ok(po)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shuffled_folds_balanced() {
        let f = assign_folds(103, 5, &FoldScheme::Shuffled, 1).unwrap();
        for k in 0..5 {
            let c = f.iter().filter(|&&v| v == k).count();
            assert!(c == 20 || c == 21, "{c}");
        }
        assert_eq!(f, assign_folds(103, 5, &FoldScheme::Shuffled, 1).unwrap());
        assert_ne!(f, assign_folds(103, 5, &FoldScheme::Shuffled, 2).unwrap());
    }

    #[test]
    fn time_blocked_contiguous() {
        let f = assign_folds(10, 2, &FoldScheme::TimeBlocked, 0).unwrap();
        assert_eq!(f, vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1]);
    }

    #[test]
    fn rejects_small_inputs() {
        assert!(matches!(assign_folds(7, 4, &FoldScheme::Shuffled, 0), Err(DmlError::TooFewRows { .. })));
        assert!(assign_folds(10, 1, &FoldScheme::Shuffled, 0).is_err());
        assert!(assign_folds(6, 2, &FoldScheme::Explicit(vec![0, 0, 0, 0, 0, 0]), 0).is_err());
    }
}
