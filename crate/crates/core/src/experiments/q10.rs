//! Q10 simulation sweep over methods, sample sizes and replications.

use std::fs;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::output::{svg_chart, Series};
use super::{fingerprint, io_err, run_cells, ConfigError, slug, CellStatus, ExperimentConfig, ExperimentError, Method, Regularization, RunOptions};
use crate::dataset::{derive_seasonal_drivers, FluxFrame, RoleSpec, TreatmentTransform, SW_POT_SM, SW_POT_SM_DIFF};
use crate::dml::{cross_fit, estimate_constant_effect, Composition, DmlConfig, FoldScheme};
use crate::gdhm::{fit_gdhm, GdhmConfig};
use crate::learners::{
    AdamConfig, GbtConfig, LearnerSpec, MlpConfig, OutputActivation, RfConfig, ValidationSplit,
};
use crate::metrics::{format_number, summarize_values, write_summary_csv, Summary};
use crate::seed::{derive_seed, tag};
use crate::synthgen::{bundled_drivers, gen_q10, DriverConfig, Q10GenConfig, SEASONAL_WINDOW_DAYS};

pub const T_REF: f64 = 15.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Q10Record {
    pub method: Method,
    pub q10_true: f64,
    pub n: usize,
    pub rep: usize,
    pub seed: u64,
    /// Estimated Q10.
    pub estimate: Option<f64>,
    /// Standard error of `ln Q10` (DML only).
    pub std_error: Option<f64>,
    /// 95% interval on the Q10 scale (DML only).
    pub ci: Option<(f64, f64)>,
    pub status: CellStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Q10Sweep {
    pub regularization: Regularization,
    pub records: Vec<Q10Record>,
    /// Per (method, true Q10, n) over successful replications, config order.
    pub summary: Vec<(Method, f64, usize, Summary)>,
    pub failures: usize,
}

impl Q10Sweep {
    pub fn estimates(&self, method: Method, q10: f64, n: usize) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.method == method && r.q10_true == q10 && r.n == n)
            .filter_map(|r| r.estimate)
            .collect()
    }

    pub fn summary_for(&self, method: Method, q10: f64, n: usize) -> Option<&Summary> {
        self.summary.iter().find(|(m, q, k, _)| *m == method && *q == q10 && *k == n).map(|(_, _, _, s)| s)
    }
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    method: Method,
    q10: f64,
    n: usize,
    rep: usize,
}

pub(crate) fn mlp_settings(cfg: &ExperimentConfig, iterations: usize, lr: f64, output: OutputActivation) -> MlpConfig {
    let l = &cfg.learners;
    let mut m = MlpConfig {
        output,
        iterations,
        adam: AdamConfig::default().with_learning_rate(lr),
        batch_size: (l.mlp_batch_size > 0).then_some(l.mlp_batch_size),
        eval_every: l.mlp_eval_every,
        validation_split: ValidationSplit::Random,
        ..Default::default()
    };
    match cfg.regularization {
        Regularization::None => {}
        Regularization::Dropout => m.dropout_rate = l.dropout_rate,
        Regularization::WeightDecay => m.weight_decay = l.weight_decay,
    }
    m
}

/// First-stage learner of a DML method.
pub(crate) fn dml_learner(cfg: &ExperimentConfig, method: Method, seed: u64) -> LearnerSpec {
    let l = &cfg.learners;
    let spec = match method {
        Method::DmlRf => LearnerSpec::rf(RfConfig {
            n_trees: l.rf_trees,
            min_samples_leaf: l.rf_min_samples_leaf,
            ..Default::default()
        }),
        Method::DmlGbt => LearnerSpec::gbt(GbtConfig {
            n_stages: l.gbt_stages,
            learning_rate: l.gbt_learning_rate,
            max_depth: l.gbt_max_depth,
            min_samples_leaf: l.gbt_min_samples_leaf,
            ..Default::default()
        }),
        Method::DmlMlp => {
            LearnerSpec::mlp(mlp_settings(cfg, l.mlp_iterations, l.mlp_learning_rate, OutputActivation::Identity))
        }
        Method::Gdhm | Method::GdhmTa => unreachable!("not a DML method"),
    };
    spec.with_seed(seed)
}

fn q10_roles() -> RoleSpec {
    RoleSpec::new("R_eco_syn", "TA", &[], &[SW_POT_SM, SW_POT_SM_DIFF], TreatmentTransform::q10(T_REF))
}

fn run_cell(cfg: &ExperimentConfig, drivers: &FluxFrame, c: &Cell) -> Q10Record {
    let base = cfg.seed;
    let qbits = c.q10.to_bits();
    let seed = derive_seed(base, &[tag(c.method.name()), qbits, c.n as u64, c.rep as u64]);
    let mut rec = Q10Record {
        method: c.method,
        q10_true: c.q10,
        n: c.n,
        rep: c.rep,
        seed,
        estimate: None,
        std_error: None,
        ci: None,
        status: CellStatus::Ok,
    };
    let outcome = (|| -> Result<(f64, Option<f64>, Option<(f64, f64)>), String> {
        let gen = Q10GenConfig { q10: c.q10, seed: derive_seed(base, &[tag("q10-data"), qbits, c.rep as u64]), ..Default::default() };
        let data = gen_q10(drivers, &gen).map_err(|e| e.to_string())?;
        if c.n > data.len() {
            return Err(format!("sample size {} exceeds the {} available rows", c.n, data.len()));
        }
        let mut sub_rng = crate::seed::rng(derive_seed(base, &[tag("subsample"), qbits, c.n as u64, c.rep as u64]));
        let mut rows = sample(&mut sub_rng, data.len(), c.n).into_vec();
        rows.sort_unstable();
        let frame = data.select_rows(&rows);
        if c.method.is_dml() {
            let spec = dml_learner(cfg, c.method, seed);
            let dml = DmlConfig {
                k_folds: cfg.folds,
                seed,
                folds: FoldScheme::Shuffled,
                composition: Composition::MultiplicativeExp,
            };
            let (_, po) = cross_fit(&frame, &q10_roles(), &spec, &spec, &dml).map_err(|e| e.to_string())?;
            let e = estimate_constant_effect(&po).map_err(|e| e.to_string())?;
            Ok((e.theta.exp(), Some(e.std_error), Some((e.ci_95.0.exp(), e.ci_95.1.exp()))))
        } else {
            let l = &cfg.learners;
            let g = GdhmConfig {
                include_ta_in_rb: c.method == Method::GdhmTa,
                t_ref: T_REF,
                q10_init_mean: c.q10,
                mlp: mlp_settings(cfg, l.gdhm_iterations, l.gdhm_learning_rate, OutputActivation::Softplus),
                seed,
                ..Default::default()
            };
            let fit = fit_gdhm(&frame, &g).map_err(|e| e.to_string())?;
            Ok((fit.q10, None, None))
        }
    })();
    match outcome {
        Ok((q, se, ci)) => {
            rec.estimate = Some(q);
            rec.std_error = se;
            rec.ci = ci;
        }
        Err(msg) => rec.status = CellStatus::Failed(msg),
    }
    rec
}

/// Bundled drivers with the seasonal radiation columns, shared by all cells.
pub(crate) fn q10_drivers(cfg: &ExperimentConfig) -> Result<FluxFrame, ExperimentError> {
    let d = bundled_drivers(&DriverConfig {
        n_years: cfg.q10_driver_years,
        seed: derive_seed(cfg.seed, &[tag("q10-drivers")]),
        ..Default::default()
    })?;
    Ok(derive_seasonal_drivers(&d, SEASONAL_WINDOW_DAYS)?)
}

/// Runs every (true Q10, method, n, replication) cell and writes
/// `q10_runs.csv`, `q10_summary.csv` and `q10_summary.svg` to the output
/// directory.
pub fn run_q10_simulation(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Q10Sweep, ExperimentError> {
    cfg.validate()?;
    let drivers = q10_drivers(cfg)?;
    if let Some(&n) = cfg.sample_sizes.iter().find(|&&n| n > drivers.len()) {
        return Err(ConfigError::Invalid {
            key: "sample_sizes".into(),
            message: format!("{n} exceeds the {} rows of {} driver years", drivers.len(), cfg.q10_driver_years),
        }
        .into());
    }
    let mut cells = Vec::new();
    for &q10 in &cfg.q10_values {
        for &method in &cfg.methods {
            for &n in &cfg.sample_sizes {
                for rep in 0..cfg.replications {
                    cells.push(Cell { method, q10, n, rep });
                }
            }
        }
    }
    let out = &cfg.output_dir;
    let fp = fingerprint(&(cfg.seed, cfg.regularization, &cfg.learners, cfg.folds, cfg.q10_driver_years));
    let cell_dir = out.join("cells").join(format!("q10-{}-{fp}", cfg.regularization.name()));
    let name = |c: &Cell| format!("{}_q{}_n{}_r{}", c.method.name(), slug(c.q10), c.n, c.rep);
    let records = run_cells(&cells, &cell_dir, name, |c| run_cell(cfg, &drivers, c), opts)?;

    let mut summary = Vec::new();
    for &q10 in &cfg.q10_values {
        for &method in &cfg.methods {
            for &n in &cfg.sample_sizes {
                let v: Vec<f64> = records
                    .iter()
                    .filter(|r| r.method == method && r.q10_true == q10 && r.n == n)
                    .filter_map(|r| r.estimate)
                    .collect();
                if let Some(s) = summarize_values(&v) {
                    summary.push((method, q10, n, s));
                }
            }
        }
    }
    let failures = records.iter().filter(|r| r.status != CellStatus::Ok).count();
    let sweep = Q10Sweep { regularization: cfg.regularization, records, summary, failures };
    write_outputs(cfg, &sweep)?;
    Ok(sweep)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), format_number)
}

fn write_outputs(cfg: &ExperimentConfig, sweep: &Q10Sweep) -> Result<(), ExperimentError> {
    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let reg = cfg.regularization.name();

    let path = out.join("q10_runs.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| io_err(&path, e))?;
    w.write_record([
        "method", "regularization", "q10_true", "n", "rep", "seed", "q10_hat", "log_q10_se", "ci_lo", "ci_hi", "status",
        "message",
    ])
    .map_err(|e| io_err(&path, e))?;
    for r in &sweep.records {
        let (status, message) = match &r.status {
            CellStatus::Ok => ("ok", String::new()),
            CellStatus::Failed(m) => ("failed", m.clone()),
        };
        w.write_record([
            r.method.name().to_string(),
            reg.to_string(),
            format_number(r.q10_true),
            r.n.to_string(),
            r.rep.to_string(),
            r.seed.to_string(),
            opt(r.estimate),
            opt(r.std_error),
            opt(r.ci.map(|c| c.0)),
            opt(r.ci.map(|c| c.1)),
            status.to_string(),
            message,
        ])
        .map_err(|e| io_err(&path, e))?;
    }
    w.flush().map_err(|e| io_err(&path, e))?;

    let path = out.join("q10_summary.csv");
    let rows: Vec<(Vec<String>, Summary)> = sweep
        .summary
        .iter()
        .map(|(m, q, n, s)| (vec![m.name().to_string(), reg.to_string(), format_number(*q), n.to_string()], s.clone()))
        .collect();
    let file = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
    write_summary_csv(file, &["method", "regularization", "q10_true", "n"], &rows).map_err(|e| io_err(&path, e))?;

    let mut series = Vec::new();
    for &q10 in &cfg.q10_values {
        for &method in &cfg.methods {
            let points: Vec<(f64, f64, f64, f64)> = sweep
                .summary
                .iter()
                .filter(|(m, q, _, _)| *m == method && *q == q10)
                .map(|(_, _, n, s)| {
                    let (lo, hi) = if s.count > 1 { (s.ci_lo, s.ci_hi) } else { (s.mean, s.mean) };
                    (*n as f64, s.mean, lo, hi)
                })
                .collect();
            let name =
                if cfg.q10_values.len() > 1 { format!("{} (Q10 {q10})", method.name()) } else { method.name().to_string() };
            series.push(Series { name, points });
        }
    }
    let svg = svg_chart(&format!("Q10 estimates ({reg})"), "sample size", "mean Q10 (95% CI)", true, &series);
    let path = out.join("q10_summary.svg");
    fs::write(&path, svg).map_err(|e| io_err(&path, e))
}
