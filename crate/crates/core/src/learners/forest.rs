//! Random forest regression: bagged, feature-subsampled regression trees.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tree::{DecisionTree, SortedColumns, TreeConfig};
use crate::seed::{derive_seed, rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfConfig {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Fraction of features tried at each split.
    pub feature_subsample: f64,
    pub bootstrap: bool,
}

impl Default for RfConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_samples_leaf: 1,
            feature_subsample: 1.0,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    trees: Vec<DecisionTree>,
}

impl ForestModel {
    pub(crate) fn fit(
        cfg: &RfConfig,
        columns: Vec<Vec<f64>>,
        targets: &[f64],
        weights: &[f64],
        seed: u64,
    ) -> Self {
        let n = targets.len();
        let p = columns.len();
        let data = SortedColumns::new(columns);
        let max_features = ((cfg.feature_subsample * p as f64).round() as usize).clamp(1, p);
        let tree_cfg = TreeConfig {
            max_depth: cfg.max_depth,
            min_samples_leaf: cfg.min_samples_leaf,
            max_features: Some(max_features),
        };
        let mut w = vec![0.0; n];
        let trees = (0..cfg.n_trees)
            .map(|t| {
                let mut rng = rng(derive_seed(seed, &[t as u64]));
                if cfg.bootstrap {
                    w.iter_mut().for_each(|v| *v = 0.0);
                    for _ in 0..n {
                        let i = rng.gen_range(0..n);
                        w[i] += weights[i];
                    }
                } else {
                    w.copy_from_slice(weights);
                }
                DecisionTree::fit(&data, targets, &w, &tree_cfg, &mut rng)
            })
            .collect();
        Self { trees }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }
}
