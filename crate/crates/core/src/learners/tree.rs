//! Weighted least-squares regression trees.
//!
//! Splits are exact greedy: every boundary between consecutive distinct
//! values of a feature is a candidate, the threshold is the midpoint, and the
//! split maximising weighted variance reduction wins. Ties go to the lowest
//! feature index, then the lowest threshold. Per-feature row orderings are
//! sorted once and stably partitioned down the tree.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Column-major training data with per-feature sort orders.
pub struct SortedColumns {
    pub columns: Vec<Vec<f64>>,
    order: Vec<Vec<u32>>,
}

impl SortedColumns {
    pub fn new(columns: Vec<Vec<f64>>) -> Self {
        let order = columns
            .iter()
            .map(|c| {
                let mut idx: Vec<u32> = (0..c.len() as u32).collect();
                idx.sort_by(|&a, &b| c[a as usize].total_cmp(&c[b as usize]));
                idx
            })
            .collect();
        Self { columns, order }
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Features examined per node; `None` means all.
    pub max_features: Option<usize>,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_samples_leaf: 1,
            max_features: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: u32, right: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

struct Best {
    feature: usize,
    pos: usize,
    threshold: f64,
    score: f64,
}

impl DecisionTree {
    /// Fits on the rows with positive weight.
    pub fn fit<R: Rng>(
        data: &SortedColumns,
        targets: &[f64],
        weights: &[f64],
        cfg: &TreeConfig,
        rng: &mut R,
    ) -> Self {
        let p = data.n_features();
        let mut ord: Vec<Vec<u32>> = data
            .order
            .iter()
            .map(|o| o.iter().copied().filter(|&i| weights[i as usize] > 0.0).collect())
            .collect();
        let n_active = ord.first().map_or(0, Vec::len);
        let mut nodes = Vec::new();
        if n_active == 0 {
            nodes.push(Node::Leaf { value: 0.0 });
            return Self { nodes };
        }
        let mut goes_left = vec![false; data.n_rows()];
        let mut scratch: Vec<u32> = Vec::with_capacity(n_active);
        let min_leaf = cfg.min_samples_leaf.max(1);
        let n_try = cfg.max_features.unwrap_or(p).clamp(1, p);

        // (node index, lo, hi, depth)
        let mut stack = vec![(0usize, 0usize, n_active, 0usize)];
        nodes.push(Node::Leaf { value: 0.0 });
        while let Some((id, lo, hi, depth)) = stack.pop() {
            let rows = &ord[0][lo..hi];
            let (mut sw, mut swy, mut swyy) = (0.0, 0.0, 0.0);
            for &r in rows {
                let (w, y) = (weights[r as usize], targets[r as usize]);
                sw += w;
                swy += w * y;
                swyy += w * y * y;
            }
            let value = swy / sw;
            nodes[id] = Node::Leaf { value };
            let count = hi - lo;
            let impurity = swyy - swy * swy / sw;
            let depth_ok = cfg.max_depth.is_none_or(|d| depth < d);
            if !depth_ok || count < 2 * min_leaf || impurity <= 1e-12 * swyy.max(f64::MIN_POSITIVE) {
                continue;
            }

            let mut features: Vec<usize> = if n_try < p {
                sample(rng, p, n_try).into_vec()
            } else {
                (0..p).collect()
            };
            features.sort_unstable();

            let parent = swy * swy / sw;
            let mut best: Option<Best> = None;
            for &f in &features {
                let col = &data.columns[f];
                let o = &ord[f][lo..hi];
                let (mut lw, mut lwy) = (0.0, 0.0);
                for k in 0..count - 1 {
                    let r = o[k] as usize;
                    lw += weights[r];
                    lwy += weights[r] * targets[r];
                    let nl = k + 1;
                    if nl < min_leaf {
                        continue;
                    }
                    if count - nl < min_leaf {
                        break;
                    }
                    let (a, b) = (col[r], col[o[k + 1] as usize]);
                    if !(a < b) {
                        continue;
                    }
                    let rw = sw - lw;
                    if lw <= 0.0 || rw <= 0.0 {
                        continue;
                    }
                    let rwy = swy - lwy;
                    let score = lwy * lwy / lw + rwy * rwy / rw;
                    if best.as_ref().is_none_or(|bst| score > bst.score) {
                        let mid = 0.5 * (a + b);
                        let threshold = if mid < b { mid } else { a };
                        best = Some(Best { feature: f, pos: k, threshold, score });
                    }
                }
            }
            let Some(best) = best else { continue };
            if best.score - parent <= 1e-12 * parent.abs().max(impurity) {
                continue;
            }

            let split_rows = &ord[best.feature][lo..hi];
            for (k, &r) in split_rows.iter().enumerate() {
                goes_left[r as usize] = k <= best.pos;
            }
            let n_left = best.pos + 1;
            for o in ord.iter_mut() {
                let seg = &mut o[lo..hi];
                scratch.clear();
                let mut w = 0;
                for k in 0..seg.len() {
                    let r = seg[k];
                    if goes_left[r as usize] {
                        seg[w] = r;
                        w += 1;
                    } else {
                        scratch.push(r);
                    }
                }
                seg[w..].copy_from_slice(&scratch);
            }

            let left = nodes.len();
            nodes.push(Node::Leaf { value: 0.0 });
            nodes.push(Node::Leaf { value: 0.0 });
            nodes[id] = Node::Split {
                feature: best.feature,
                threshold: best.threshold,
                left: left as u32,
                right: left as u32 + 1,
            };
            stack.push((left + 1, lo + n_left, hi, depth + 1));
            stack.push((left, lo, lo + n_left, depth + 1));
        }
        Self { nodes }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split { feature, threshold, left, right } => {
                    i = if row[*feature] <= *threshold { *left } else { *right } as usize;
                }
            }
        }
    }

    /// Prediction for row `i` of column-major data.
    pub fn predict_column_row(&self, columns: &[Vec<f64>], i: usize) -> f64 {
        let mut k = 0usize;
        loop {
            match &self.nodes[k] {
                Node::Leaf { value } => return *value,
                Node::Split { feature, threshold, left, right } => {
                    k = if columns[*feature][i] <= *threshold { *left } else { *right } as usize;
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => {
                    1 + go(nodes, *left as usize).max(go(nodes, *right as usize))
                }
            }
        }
        go(&self.nodes, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng;

    fn fit(xs: Vec<Vec<f64>>, y: &[f64], cfg: &TreeConfig) -> DecisionTree {
        let w = vec![1.0; y.len()];
        DecisionTree::fit(&SortedColumns::new(xs), y, &w, cfg, &mut rng(0))
    }

    #[test]
    fn step_function_exact() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|&v| if v < 4.5 { 1.0 } else { 3.0 }).collect();
        let t = fit(vec![x], &y, &TreeConfig::default());
        assert_eq!(t.n_leaves(), 2);
        assert_eq!(t.predict_row(&[4.0]), 1.0);
        assert_eq!(t.predict_row(&[5.0]), 3.0);
        assert_eq!(t.predict_row(&[4.5]), 1.0);
    }

    #[test]
    fn tie_prefers_lowest_feature() {
        // two identical features: split must use feature 0
        let x: Vec<f64> = (0..8).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|&v| if v < 4.0 { 0.0 } else { 1.0 }).collect();
        let t = fit(vec![x.clone(), x], &y, &TreeConfig::default());
        match &t.nodes[0] {
            Node::Split { feature, .. } => assert_eq!(*feature, 0),
            _ => panic!("expected split"),
        }
    }

    #[test]
    fn respects_depth_and_leaf_size() {
        let x: Vec<f64> = (0..64).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| (v * 0.3).sin()).collect();
        let t = fit(vec![x.clone()], &y, &TreeConfig { max_depth: Some(3), ..Default::default() });
        assert!(t.depth() <= 3);
        assert!(t.n_leaves() <= 8);
        let t = fit(vec![x], &y, &TreeConfig { min_samples_leaf: 20, ..Default::default() });
        assert!(t.n_leaves() <= 3);
    }

    #[test]
    fn weighted_leaf_mean() {
        let x = vec![vec![0.0, 0.0, 1.0]];
        let y = [1.0, 3.0, 10.0];
        let w = [3.0, 1.0, 1.0];
        let t = DecisionTree::fit(
            &SortedColumns::new(x),
            &y,
            &w,
            &TreeConfig::default(),
            &mut rng(0),
        );
        assert_eq!(t.predict_row(&[0.0]), 1.5);
        assert_eq!(t.predict_row(&[1.0]), 10.0);
    }

    #[test]
    fn constant_target_single_leaf() {
        let x = vec![(0..20).map(f64::from).collect()];
        let t = fit(x, &[2.5; 20], &TreeConfig::default());
        assert_eq!(t.n_leaves(), 1);
        assert_eq!(t.predict_row(&[3.0]), 2.5);
    }
}
