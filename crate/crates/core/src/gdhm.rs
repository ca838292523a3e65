//! Gradient-descent hybrid model: base respiration from a softplus network
//! times `Q10^{(TA − T_ref)/10}`, with `log Q10` and the network weights
//! optimized jointly under one Adam state.

use std::io::Write;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetError, FluxFrame};
use crate::learners::{
    adam_step, sample_mask, validation_split, AdamConfig, AdamState, BatchSampler, MlpConfig, NetworkLayout,
    OutputActivation, Standardizer, Workspace,
};
use crate::seed::{derive_seed, rng, tag};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GdhmError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("target must be positive; row {row} has {value}")]
    NonPositiveTarget { row: usize, value: f64 },
    #[error("training diverged (non-finite loss) at iteration {iteration}")]
    Diverged { iteration: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("io: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GdhmConfig {
    pub target: String,
    pub temperature: String,
    /// Base-respiration predictors besides temperature.
    pub predictors: Vec<String>,
    /// Also feed temperature to the network (exposes equifinality).
    pub include_ta_in_rb: bool,
    pub t_ref: f64,
    /// Initial Q10 is drawn from Normal(mean, sd).
    pub q10_init_mean: f64,
    pub q10_init_sd: f64,
    /// Network, regularization and optimizer settings; the output activation
    /// is always softplus.
    pub mlp: MlpConfig,
    pub seed: u64,
    pub record_history: bool,
}

impl Default for GdhmConfig {
    fn default() -> Self {
        Self {
            target: "R_eco_syn".into(),
            temperature: "TA".into(),
            predictors: vec!["SW_POT_sm".into(), "SW_POT_sm_diff".into()],
            include_ta_in_rb: false,
            t_ref: 15.0,
            q10_init_mean: 1.5,
            q10_init_sd: 0.1,
            mlp: MlpConfig {
                output: OutputActivation::Softplus,
                iterations: 10_000,
                adam: AdamConfig::default().with_learning_rate(1e-2),
                ..Default::default()
            },
            seed: 0,
            record_history: false,
        }
    }
}

impl GdhmConfig {
    pub fn input_columns(&self) -> Vec<String> {
        let mut v = self.predictors.clone();
        if self.include_ta_in_rb {
            v.push(self.temperature.clone());
        }
        v
    }
}

/// The fitted base-respiration network `R_b(X[, TA])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseRespirationModel {
    pub input_columns: Vec<String>,
    layout: NetworkLayout,
    params: Vec<f64>,
    inputs: Standardizer,
    target_scale: f64,
}

impl BaseRespirationModel {
    pub fn predict(&self, frame: &FluxFrame) -> Result<Vec<f64>, GdhmError> {
        let x = frame.matrix(&self.input_columns)?;
        let xs = self.inputs.transform(x.view());
        let p = x.ncols();
        let mut ws = self.layout.workspace();
        Ok((0..x.nrows())
            .map(|i| {
                let z = self.layout.forward_row(&self.params, &xs[i * p..(i + 1) * p], None, &mut ws);
                self.target_scale * OutputActivation::Softplus.apply(z)
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iteration: usize,
    pub batch_loss: f64,
    pub validation_loss: Option<f64>,
    pub q10: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GdhmFit {
    pub q10: f64,
    pub q10_init: f64,
    pub rb_model: BaseRespirationModel,
    pub best_iteration: usize,
    /// Mean squared error on the training split, in target units².
    pub train_loss_init: f64,
    pub train_loss_best: f64,
    pub validation_loss_best: Option<f64>,
    pub history: Vec<HistoryRow>,
}

/// Elementwise `R_b · q10^{(TA − t_ref)/10}`.
pub fn predict_gdhm(
    q10: f64,
    rb_model: &BaseRespirationModel,
    frame: &FluxFrame,
    temperature: &str,
    t_ref: f64,
) -> Result<Vec<f64>, GdhmError> {
    let rb = rb_model.predict(frame)?;
    let ta = frame.column(temperature)?;
    Ok(rb.iter().zip(ta).map(|(r, t)| r * q10.powf((t - t_ref) / 10.0)).collect())
}

/// Data of one fit in optimizer units.
struct Problem<'a> {
    layout: &'a NetworkLayout,
    xs: &'a [f64],
    f: &'a [f64],
    y: &'a [f64],
    p: usize,
}

impl Problem<'_> {
    /// Mean squared error over `rows` without dropout.
    fn loss(&self, params: &[f64], rows: &[usize], ws: &mut Workspace) -> f64 {
        let log_q = params[params.len() - 1];
        let net = &params[..params.len() - 1];
        let mut s = 0.0;
        for &i in rows {
            let z = self.layout.forward_row(net, &self.xs[i * self.p..(i + 1) * self.p], None, ws);
            let r = OutputActivation::Softplus.apply(z) * (log_q * self.f[i]).exp() - self.y[i];
            s += r * r;
        }
        s / rows.len().max(1) as f64
    }
}

/// Fits the hybrid model on every row of `frame`; the last
/// `validation_fraction` of rows (or a random subset) selects the snapshot.
pub fn fit_gdhm(frame: &FluxFrame, cfg: &GdhmConfig) -> Result<GdhmFit, GdhmError> {
    cfg.mlp.validate().map_err(|e| GdhmError::InvalidConfig(e.to_string()))?;
    if !(cfg.q10_init_mean > 0.0 && cfg.q10_init_sd >= 0.0) {
        return Err(GdhmError::InvalidConfig("Q10 prior needs positive mean and non-negative sd".into()));
    }
    let inputs = cfg.input_columns();
    let x = frame.matrix(&inputs)?;
    let y_raw = frame.column(&cfg.target)?;
    if let Some(row) = y_raw.iter().position(|v| !(*v > 0.0)) {
        return Err(GdhmError::NonPositiveTarget { row, value: y_raw[row] });
    }
    let n = y_raw.len();
    if n < 2 {
        return Err(GdhmError::InvalidConfig(format!("need at least 2 rows, got {n}")));
    }
    let f: Vec<f64> = frame.column(&cfg.temperature)?.iter().map(|t| (t - cfg.t_ref) / 10.0).collect();
    let (train, val) = validation_split(n, cfg.mlp.validation_fraction, cfg.mlp.validation_split, derive_seed(cfg.seed, &[tag("split")]));
    let standardizer = Standardizer::fit(x.view(), &train);
    let xs = standardizer.transform(x.view());
    let target_scale = train.iter().map(|&i| y_raw[i]).sum::<f64>() / train.len() as f64;
    let y: Vec<f64> = y_raw.iter().map(|v| v / target_scale).collect();

    let mut r = rng(cfg.seed);
    let layout = NetworkLayout::new(inputs.len(), &cfg.mlp.hidden_layers);
    let mut params = layout.init_params(&mut r);
    let q10_init = if cfg.q10_init_sd > 0.0 {
        let d = Normal::new(cfg.q10_init_mean, cfg.q10_init_sd).expect("valid normal");
        // a draw at or below zero cannot seed log Q10; redraw
        loop {
            let q: f64 = d.sample(&mut r);
            if q > 0.0 {
                break q;
            }
        }
    } else {
        cfg.q10_init_mean
    };
    params.push(q10_init.ln());
    let n_net = params.len() - 1;

    let problem = Problem { layout: &layout, xs: &xs, f: &f, y: &y, p: inputs.len() };
    let mut ws = layout.workspace();
    let mut adam = AdamState::new(params.len());
    let mut grad = vec![0.0; params.len()];
    let h = layout.n_hidden_units();
    let mut mask = vec![1.0; h];
    let dropout = cfg.mlp.dropout_rate > 0.0;
    let wd = cfg.mlp.weight_decay;
    let mut sampler = BatchSampler::new(train.clone(), cfg.mlp.batch_size);
    let select = !val.is_empty();
    let eval_every = cfg.mlp.eval_every.max(1);

    let train_loss_init = problem.loss(&params, &train, &mut ws);
    let mut best = params.clone();
    let mut best_iteration = 0;
    let mut best_val = if select { problem.loss(&params, &val, &mut ws) } else { f64::INFINITY };
    let mut history = Vec::new();

    for it in 1..=cfg.mlp.iterations {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let batch = sampler.next_batch(&mut r);
        let m = batch.len() as f64;
        let log_q = params[n_net];
        let mut batch_loss = 0.0;
        for &i in batch {
            if dropout {
                sample_mask(&mut r, cfg.mlp.dropout_rate, &mut mask);
            }
            let mk = dropout.then_some(mask.as_slice());
            let z = layout.forward_row(&params[..n_net], &xs[i * problem.p..(i + 1) * problem.p], mk, &mut ws);
            let e = (log_q * f[i]).exp();
            let rb = OutputActivation::Softplus.apply(z);
            let res = rb * e - y[i];
            batch_loss += res * res / m;
            let d = 2.0 * res / m;
            layout.backward_row(&params[..n_net], &mut ws, mk, d * e * OutputActivation::Softplus.derivative(z), &mut grad[..n_net]);
            grad[n_net] += d * rb * e * f[i];
        }
        if wd > 0.0 {
            for (g, &q) in grad[..n_net].iter_mut().zip(&params[..n_net]) {
                *g += 2.0 * wd * q;
            }
        }
        adam_step(&mut params, &grad, &mut adam, &cfg.mlp.adam);
        if !batch_loss.is_finite() || params.iter().any(|v| !v.is_finite()) {
            return Err(GdhmError::Diverged { iteration: it });
        }
        let evaluate = select && (it % eval_every == 0 || it == cfg.mlp.iterations);
        let mut vloss = None;
        if evaluate {
            let v = problem.loss(&params, &val, &mut ws);
            if v < best_val {
                best_val = v;
                best.copy_from_slice(&params);
                best_iteration = it;
            }
            vloss = Some(v);
        }
        if cfg.record_history {
            history.push(HistoryRow {
                iteration: it,
                batch_loss: batch_loss * target_scale * target_scale,
                validation_loss: vloss.map(|v| v * target_scale * target_scale),
                q10: params[n_net].exp(),
            });
        }
    }
    if !select {
        best = params;
        best_iteration = cfg.mlp.iterations;
    }
    let s2 = target_scale * target_scale;
    let train_loss_best = problem.loss(&best, &train, &mut ws) * s2;
    let q10 = best[n_net].exp();
    best.truncate(n_net);
    Ok(GdhmFit {
        q10,
        q10_init,
        rb_model: BaseRespirationModel { input_columns: inputs, layout, params: best, inputs: standardizer, target_scale },
        best_iteration,
        train_loss_init: train_loss_init * s2,
        train_loss_best,
        validation_loss_best: select.then_some(best_val * s2),
        history,
    })
}

/// Writes `iteration,batch_loss,validation_loss,q10` rows.
pub fn write_history_csv<W: Write>(out: W, history: &[HistoryRow]) -> Result<(), GdhmError> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| GdhmError::Io(e.to_string());
    w.write_record(["iteration", "batch_loss", "validation_loss", "q10"]).map_err(io)?;
    for h in history {
        w.write_record([
            h.iteration.to_string(),
            format!("{}", h.batch_loss),
            h.validation_loss.map_or_else(String::new, |v| format!("{v}")),
            format!("{}", h.q10),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| GdhmError::Io(e.to_string()))
}
