//! Fully connected tanh networks trained with Adam.
//!
//! Parameters live in one flat vector. For each weight layer the weight
//! matrix comes first (row-major, `inputs × outputs`) followed by the bias.
//! Dropout is inverted: kept hidden units are scaled by `1 / (1 - rate)`
//! during training so inference needs no rescaling.

use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::LearnerError;
use crate::seed::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputActivation {
    Identity,
    Softplus,
}

impl OutputActivation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            OutputActivation::Identity => z,
            OutputActivation::Softplus => softplus(z),
        }
    }

    /// Derivative with respect to the pre-activation.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            OutputActivation::Identity => 1.0,
            OutputActivation::Softplus => sigmoid(z),
        }
    }
}

#[inline]
pub fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        z.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// How validation rows are chosen for model selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValidationSplit {
    /// The last contiguous block of rows.
    Tail,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden_layers: Vec<usize>,
    pub output: OutputActivation,
    pub dropout_rate: f64,
    pub weight_decay: f64,
    pub adam: AdamConfig,
    pub iterations: usize,
    pub validation_fraction: f64,
    pub validation_split: ValidationSplit,
    /// Rows per step; `None` trains full-batch.
    pub batch_size: Option<usize>,
    /// Validation loss is checked every this many steps.
    pub eval_every: usize,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden_layers: vec![16, 16],
            output: OutputActivation::Identity,
            dropout_rate: 0.0,
            weight_decay: 0.0,
            adam: AdamConfig::default(),
            iterations: 2000,
            validation_fraction: 0.2,
            validation_split: ValidationSplit::Tail,
            batch_size: None,
            eval_every: 1,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<(), LearnerError> {
        let bad = |m: &str| Err(LearnerError::InvalidConfig(m.to_string()));
        if self.hidden_layers.contains(&0) {
            return bad("hidden layer widths must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout rate must be in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation fraction must be in [0, 1)");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight decay must be non-negative");
        }
        if self.iterations == 0 {
            return bad("iterations must be positive");
        }
        if self.batch_size == Some(0) {
            return bad("batch size must be positive");
        }
        Ok(())
    }
}

/// Layer widths of a network with a single output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkLayout {
    sizes: Vec<usize>,
}

/// Per-row activations reused across forward/backward passes.
pub struct Workspace {
    act: Vec<Vec<f64>>,
    tanh: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl NetworkLayout {
    pub fn new(n_inputs: usize, hidden: &[usize]) -> Self {
        let mut sizes = vec![n_inputs];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        Self { sizes }
    }

    pub fn n_inputs(&self) -> usize {
        self.sizes[0]
    }

    pub fn n_params(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Total hidden units, i.e. the dropout mask length per row.
    pub fn n_hidden_units(&self) -> usize {
        self.sizes[1..self.sizes.len() - 1].iter().sum()
    }

    pub fn workspace(&self) -> Workspace {
        let widest = *self.sizes.iter().max().unwrap();
        Workspace {
            act: self.sizes.iter().map(|&s| vec![0.0; s]).collect(),
            tanh: self.sizes.iter().map(|&s| vec![0.0; s]).collect(),
            delta: vec![0.0; widest],
            delta_prev: vec![0.0; widest],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init_params<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        for w in self.sizes.windows(2) {
            let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
            p.extend((0..w[0] * w[1]).map(|_| rng.gen_range(-limit..limit)));
            p.extend(std::iter::repeat_n(0.0, w[1]));
        }
        p
    }

    /// Forward pass for one row; returns the output pre-activation.
    pub fn forward_row(&self, params: &[f64], x: &[f64], mask: Option<&[f64]>, ws: &mut Workspace) -> f64 {
        let n_layers = self.sizes.len() - 1;
        ws.act[0].copy_from_slice(x);
        let mut off = 0;
        let mut mask_off = 0;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &params[off..off + n_in * n_out];
            let b = &params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let (lower, upper) = ws.act.split_at_mut(l + 1);
            let input = &lower[l];
            let z = &mut upper[0];
            z.copy_from_slice(b);
            for (i, &a) in input.iter().enumerate() {
                if a != 0.0 {
                    let row = &w[i * n_out..(i + 1) * n_out];
                    for (zj, &wij) in z.iter_mut().zip(row) {
                        *zj += a * wij;
                    }
                }
            }
            if l + 1 < n_layers {
                let th = &mut ws.tanh[l + 1];
                for j in 0..n_out {
                    th[j] = z[j].tanh();
                }
                match mask {
                    Some(m) => {
                        let m = &m[mask_off..mask_off + n_out];
                        for j in 0..n_out {
                            z[j] = th[j] * m[j];
                        }
                    }
                    None => z.copy_from_slice(th),
                }
                mask_off += n_out;
            }
        }
        ws.act[n_layers][0]
    }

    /// Adds `d_out * ∂z_out/∂params` to `grad`, using the activations left in
    /// `ws` by the preceding [`forward_row`](Self::forward_row).
    pub fn backward_row(&self, params: &[f64], ws: &mut Workspace, mask: Option<&[f64]>, d_out: f64, grad: &mut [f64]) {
        let n_layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for w in self.sizes.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        let mut mask_end = self.n_hidden_units();
        ws.delta[0] = d_out;
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let o = offsets[l];
            let input = &ws.act[l];
            let delta = &ws.delta[..n_out];
            {
                let (gw, gb) = grad[o..o + n_in * n_out + n_out].split_at_mut(n_in * n_out);
                for (i, &a) in input.iter().enumerate() {
                    if a != 0.0 {
                        let row = &mut gw[i * n_out..(i + 1) * n_out];
                        for (g, &d) in row.iter_mut().zip(delta) {
                            *g += a * d;
                        }
                    }
                }
                for (g, &d) in gb.iter_mut().zip(delta) {
                    *g += d;
                }
            }
            if l > 0 {
                let w = &params[o..o + n_in * n_out];
                let th = &ws.tanh[l];
                let m = mask.map(|m| &m[mask_end - n_in..mask_end]);
                mask_end -= n_in;
                for i in 0..n_in {
                    let row = &w[i * n_out..(i + 1) * n_out];
                    let mut s = 0.0;
                    for (wij, d) in row.iter().zip(delta) {
                        s += wij * d;
                    }
                    if let Some(m) = m {
                        s *= m[i];
                    }
                    ws.delta_prev[i] = s * (1.0 - th[i] * th[i]);
                }
                std::mem::swap(&mut ws.delta, &mut ws.delta_prev);
            }
        }
    }
}

/// Weighted mean squared error plus `weight_decay·‖params‖²`, and its exact
/// gradient. `features` is row-major `n × p`; `mask`, when given, holds
/// `n × n_hidden_units` dropout multipliers.
#[allow(clippy::too_many_arguments)]
pub fn mlp_loss_and_gradient(
    layout: &NetworkLayout,
    params: &[f64],
    features: &[f64],
    targets: &[f64],
    weights: Option<&[f64]>,
    output: OutputActivation,
    weight_decay: f64,
    mask: Option<&[f64]>,
) -> (f64, Vec<f64>) {
    let p = layout.n_inputs();
    let h = layout.n_hidden_units();
    let n = targets.len();
    let mut grad = vec![0.0; params.len()];
    let mut ws = layout.workspace();
    let sw: f64 = weights.map_or(n as f64, |w| w.iter().sum());
    let mut loss = 0.0;
    for i in 0..n {
        let m = mask.map(|m| &m[i * h..(i + 1) * h]);
        let z = layout.forward_row(params, &features[i * p..(i + 1) * p], m, &mut ws);
        let w = weights.map_or(1.0, |w| w[i]) / sw;
        let r = output.apply(z) - targets[i];
        loss += w * r * r;
        layout.backward_row(params, &mut ws, m, 2.0 * w * r * output.derivative(z), &mut grad);
    }
    if weight_decay > 0.0 {
        for (g, &q) in grad.iter_mut().zip(params) {
            *g += 2.0 * weight_decay * q;
            loss += weight_decay * q * q;
        }
    }
    (loss, grad)
}

/// Gradient of the loss declared for `config` (squared error, weight decay,
/// optional fixed dropout mask).
pub fn mlp_gradient(
    layout: &NetworkLayout,
    params: &[f64],
    features: &[f64],
    targets: &[f64],
    config: &MlpConfig,
    mask: Option<&[f64]>,
) -> Vec<f64> {
    mlp_loss_and_gradient(layout, params, features, targets, None, config.output, config.weight_decay, mask).1
}

/// Per-feature z-scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    /// Statistics over `rows` of a row-major `n × p` matrix.
    pub fn fit(features: ArrayView2<f64>, rows: &[usize]) -> Self {
        let p = features.ncols();
        let m = rows.len().max(1) as f64;
        let mut mean = vec![0.0; p];
        let mut sd = vec![0.0; p];
        for j in 0..p {
            mean[j] = rows.iter().map(|&i| features[[i, j]]).sum::<f64>() / m;
            let var = rows.iter().map(|&i| (features[[i, j]] - mean[j]).powi(2)).sum::<f64>() / m;
            sd[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        Self { mean, sd }
    }

    pub fn transform_row(&self, row: impl Iterator<Item = f64>, out: &mut [f64]) {
        for ((o, v), (m, s)) in out.iter_mut().zip(row).zip(self.mean.iter().zip(&self.sd)) {
            *o = (v - m) / s;
        }
    }

    /// Row-major standardized copy of the whole matrix.
    pub fn transform(&self, features: ArrayView2<f64>) -> Vec<f64> {
        let p = features.ncols();
        let mut out = vec![0.0; features.nrows() * p];
        for (i, row) in features.outer_iter().enumerate() {
            self.transform_row(row.iter().copied(), &mut out[i * p..(i + 1) * p]);
        }
        out
    }
}

/// Splits `0..n` into (train, validation) rows.
pub fn validation_split(n: usize, fraction: f64, how: ValidationSplit, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let n_val = ((n as f64) * fraction).floor() as usize;
    let n_val = n_val.min(n.saturating_sub(1));
    let mut idx: Vec<usize> = (0..n).collect();
    if how == ValidationSplit::Random {
        idx.shuffle(&mut rng(seed));
        let mut val = idx.split_off(n - n_val);
        idx.sort_unstable();
        val.sort_unstable();
        (idx, val)
    } else {
        let val = idx.split_off(n - n_val);
        (idx, val)
    }
}

/// Draws a fresh inverted-dropout mask.
pub fn sample_mask<R: Rng>(rng: &mut R, rate: f64, out: &mut [f64]) {
    let keep = 1.0 / (1.0 - rate);
    for m in out.iter_mut() {
        *m = if rng.gen::<f64>() < rate { 0.0 } else { keep };
    }
}

/// Cycles through shuffled epochs of `rows`, yielding batches of `size`.
pub struct BatchSampler {
    rows: Vec<usize>,
    size: usize,
    pos: usize,
}

impl BatchSampler {
    pub fn new(rows: Vec<usize>, size: Option<usize>) -> Self {
        let size = size.unwrap_or(rows.len()).min(rows.len()).max(1);
        Self { pos: rows.len(), rows, size }
    }

    pub fn is_full_batch(&self) -> bool {
        self.size >= self.rows.len()
    }

    pub fn next_batch<R: Rng>(&mut self, rng: &mut R) -> &[usize] {
        if self.is_full_batch() {
            return &self.rows;
        }
        if self.pos + self.size > self.rows.len() {
            self.rows.shuffle(rng);
            self.pos = 0;
        }
        let b = &self.rows[self.pos..self.pos + self.size];
        self.pos += self.size;
        b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    layout: NetworkLayout,
    params: Vec<f64>,
    inputs: Standardizer,
    output: OutputActivation,
    target_shift: f64,
    target_scale: f64,
}

/// Result of MLP training.
pub(crate) struct MlpFit {
    pub model: MlpModel,
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
    pub best_iteration: usize,
}

impl MlpModel {
    pub(crate) fn fit(
        cfg: &MlpConfig,
        features: ArrayView2<f64>,
        targets: &[f64],
        weights: &[f64],
        seed: u64,
    ) -> Result<MlpFit, LearnerError> {
        cfg.validate()?;
        let n = targets.len();
        let p = features.ncols();
        let mut rng = rng(seed);
        let (train, val) = validation_split(n, cfg.validation_fraction, cfg.validation_split, seed ^ 0x5eed);

        let inputs = Standardizer::fit(features, &train);
        let xs = inputs.transform(features);
        let (target_shift, target_scale) = target_scaling(cfg.output, targets, weights, &train);
        let ys: Vec<f64> = targets.iter().map(|y| (y - target_shift) / target_scale).collect();

        let layout = NetworkLayout::new(p, &cfg.hidden_layers);
        let mut params = layout.init_params(&mut rng);
        let mut adam = AdamState::new(params.len());
        let h = layout.n_hidden_units();
        let mut ws = layout.workspace();
        let mut grad = vec![0.0; params.len()];
        let mut mask = vec![1.0; h];
        let dropout = cfg.dropout_rate > 0.0;
        let mut sampler = BatchSampler::new(train.clone(), cfg.batch_size);

        let eval = |params: &[f64], rows: &[usize], ws: &mut Workspace| -> f64 {
            let (mut s, mut sw) = (0.0, 0.0);
            for &i in rows {
                let z = layout.forward_row(params, &xs[i * p..(i + 1) * p], None, ws);
                let r = cfg.output.apply(z) - ys[i];
                s += weights[i] * r * r;
                sw += weights[i];
            }
            if sw > 0.0 {
                s / sw
            } else {
                0.0
            }
        };

        let select = !val.is_empty();
        let mut best_params = params.clone();
        let mut best_iteration = 0;
        let mut best_val = if select { eval(&params, &val, &mut ws) } else { f64::INFINITY };

        for it in 1..=cfg.iterations {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let batch = sampler.next_batch(&mut rng);
            let sw: f64 = batch.iter().map(|&i| weights[i]).sum();
            if sw > 0.0 {
                for &i in batch {
                    if weights[i] == 0.0 {
                        continue;
                    }
                    if dropout {
                        sample_mask(&mut rng, cfg.dropout_rate, &mut mask);
                    }
                    let m = dropout.then_some(mask.as_slice());
                    let z = layout.forward_row(&params, &xs[i * p..(i + 1) * p], m, &mut ws);
                    let r = cfg.output.apply(z) - ys[i];
                    let d = 2.0 * weights[i] / sw * r * cfg.output.derivative(z);
                    layout.backward_row(&params, &mut ws, m, d, &mut grad);
                }
            }
            if cfg.weight_decay > 0.0 {
                for (g, &q) in grad.iter_mut().zip(&params) {
                    *g += 2.0 * cfg.weight_decay * q;
                }
            }
            adam_step(&mut params, &grad, &mut adam, &cfg.adam);
            if params.iter().any(|v| !v.is_finite()) {
                return Err(LearnerError::Diverged { iteration: it });
            }
            if select && (it % cfg.eval_every.max(1) == 0 || it == cfg.iterations) {
                let v = eval(&params, &val, &mut ws);
                if v < best_val {
                    best_val = v;
                    best_params.copy_from_slice(&params);
                    best_iteration = it;
                }
            }
        }
        if !select {
            best_params = params;
            best_iteration = cfg.iterations;
        }
        let s2 = target_scale * target_scale;
        let train_loss = eval(&best_params, &train, &mut ws) * s2;
        Ok(MlpFit {
            model: MlpModel {
                layout,
                params: best_params,
                inputs,
                output: cfg.output,
                target_shift,
                target_scale,
            },
            train_loss,
            validation_loss: select.then_some(best_val * s2),
            best_iteration,
        })
    }

    pub fn predict(&self, features: ArrayView2<f64>) -> Vec<f64> {
        let p = features.ncols();
        let mut ws = self.layout.workspace();
        let mut x = vec![0.0; p];
        features
            .outer_iter()
            .map(|row| {
                self.inputs.transform_row(row.iter().copied(), &mut x);
                let z = self.layout.forward_row(&self.params, &x, None, &mut ws);
                self.target_shift + self.target_scale * self.output.apply(z)
            })
            .collect()
    }
}

/// Targets are centered and scaled for an identity output; for a softplus
/// output they are only scaled (by their mean absolute value) to stay positive.
pub(crate) fn target_scaling(output: OutputActivation, targets: &[f64], weights: &[f64], rows: &[usize]) -> (f64, f64) {
    let sw: f64 = rows.iter().map(|&i| weights[i]).sum::<f64>().max(f64::MIN_POSITIVE);
    match output {
        OutputActivation::Identity => {
            let mean = rows.iter().map(|&i| weights[i] * targets[i]).sum::<f64>() / sw;
            let var = rows.iter().map(|&i| weights[i] * (targets[i] - mean).powi(2)).sum::<f64>() / sw;
            (mean, if var > 0.0 { var.sqrt() } else { 1.0 })
        }
        OutputActivation::Softplus => {
            let m = rows.iter().map(|&i| weights[i] * targets[i].abs()).sum::<f64>() / sw;
            (0.0, if m > 0.0 { m } else { 1.0 })
        }
    }
}
