//! Gradient boosting with squared-error loss.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::tree::{DecisionTree, SortedColumns, TreeConfig};
use crate::seed::{derive_seed, rng, tag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtConfig {
    pub n_stages: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Fraction of rows drawn (without replacement) for each stage.
    pub subsample: f64,
    /// Fraction of rows held out to choose the number of stages; 0 disables
    /// early stopping.
    #[serde(default)]
    pub validation_fraction: f64,
    /// Stages without a new best validation loss before stopping.
    #[serde(default = "default_patience")]
    pub n_iter_no_change: usize,
}

fn default_patience() -> usize {
    10
}

impl Default for GbtConfig {
    fn default() -> Self {
        Self {
            n_stages: 100,
            learning_rate: 0.1,
            max_depth: 3,
            min_samples_leaf: 1,
            subsample: 1.0,
            validation_fraction: 0.0,
            n_iter_no_change: default_patience(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    init: f64,
    learning_rate: f64,
    trees: Vec<DecisionTree>,
}

impl GbtModel {
    /// Fits the ensemble and returns it with the weighted training loss after
    /// each stage. With early stopping the ensemble is cut back to the stage
    /// with the lowest weighted loss on the held-out rows.
    pub(crate) fn fit(
        cfg: &GbtConfig,
        columns: Vec<Vec<f64>>,
        targets: &[f64],
        weights: &[f64],
        seed: u64,
    ) -> (Self, Vec<f64>) {
        let n = targets.len();
        let mut train_w = weights.to_vec();
        let mut val_w = vec![0.0; n];
        if cfg.validation_fraction > 0.0 {
            let n_val = ((cfg.validation_fraction * n as f64).round() as usize).clamp(1, n - 1);
            let mut r = rng(derive_seed(seed, &[tag("gbt-validation")]));
            for i in sample(&mut r, n, n_val) {
                val_w[i] = weights[i];
                train_w[i] = 0.0;
            }
        }
        let sw: f64 = train_w.iter().sum();
        let sv: f64 = val_w.iter().sum();
        // a held-out set without weight, or taking all of it, cannot stop anything
        let (train_w, early) = if sv > 0.0 && sw > 0.0 { (train_w, true) } else { (weights.to_vec(), false) };
        let sw: f64 = train_w.iter().sum();
        let init = train_w.iter().zip(targets).map(|(w, y)| w * y).sum::<f64>() / sw;
        let data = SortedColumns::new(columns);
        let tree_cfg = TreeConfig {
            max_depth: Some(cfg.max_depth),
            min_samples_leaf: cfg.min_samples_leaf,
            max_features: None,
        };
        let mut rng = rng(seed);
        let mut pred = vec![init; n];
        let mut resid = vec![0.0; n];
        let mut stage_w = train_w.clone();
        let mut trees = Vec::with_capacity(cfg.n_stages);
        let mut history = Vec::with_capacity(cfg.n_stages);
        let n_sub = ((cfg.subsample * n as f64).round() as usize).clamp(1, n);
        let loss = |pred: &[f64], w: &[f64], total: f64| {
            (0..n).map(|i| w[i] * (targets[i] - pred[i]).powi(2)).sum::<f64>() / total
        };
        let (mut best, mut best_len) = (if early { loss(&pred, &val_w, sv) } else { f64::INFINITY }, 0);
        for _ in 0..cfg.n_stages {
            for i in 0..n {
                resid[i] = targets[i] - pred[i];
            }
            if n_sub < n {
                stage_w.iter_mut().for_each(|w| *w = 0.0);
                for i in sample(&mut rng, n, n_sub) {
                    stage_w[i] = train_w[i];
                }
            }
            let tree = DecisionTree::fit(&data, &resid, &stage_w, &tree_cfg, &mut rng);
            for (i, p) in pred.iter_mut().enumerate() {
                *p += cfg.learning_rate * tree.predict_column_row(&data.columns, i);
            }
            trees.push(tree);
            history.push(loss(&pred, &train_w, sw));
            if early {
                let v = loss(&pred, &val_w, sv);
                if v < best {
                    (best, best_len) = (v, trees.len());
                } else if trees.len() - best_len >= cfg.n_iter_no_change {
                    break;
                }
            }
        }
        if early {
            trees.truncate(best_len);
            history.truncate(best_len);
        }
        (
            Self {
                init,
                learning_rate: cfg.learning_rate,
                trees,
            },
            history,
        )
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.init
            + self.learning_rate * self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>()
    }

    pub fn n_stages(&self) -> usize {
        self.trees.len()
    }
}
