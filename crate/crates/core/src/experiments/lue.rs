//! Light-use-efficiency flux-partitioning sweep over noise levels.

use std::fmt::Write as _;
use std::fs;

use serde::{Deserialize, Serialize};

use super::output::{svg_chart, Series};
use super::{fingerprint, io_err, run_cells, slug, CellStatus, ExperimentConfig, ExperimentError, LightTransform, RunOptions};
use crate::dataset::{FluxFrame, RoleSpec, TreatmentTransform, SW_POT_SM, SW_POT_SM_DIFF};
use crate::dml::{
    cross_fit, estimate_heterogeneous_effect, predict_hybrid, Composition, DmlConfig, Effect, FoldScheme, HybridModel,
};
use crate::learners::{GbtConfig, LearnerSpec};
use crate::lightcurve::{transform_sw, WindowGeometry};
use crate::metrics::{format_number, score, summarize_values, ScoreTriple, Summary};
use crate::seed::{derive_seed, tag};
use crate::synthgen::{bundled_drivers, gen_lue, DriverConfig, LueGenConfig};

/// Scored fluxes, in output order.
pub const FLUXES: [&str; 4] = ["GPP", "RECO", "NEE_clean", "NEE"];

/// Name of the transformed light column when the hyperbola is used.
pub const SW_TRANSFORMED: &str = "SW_IN_f";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LueRecord {
    pub sigma: f64,
    pub rep: usize,
    pub seed: u64,
    /// One score per entry of [`FLUXES`] when the cell succeeded.
    pub scores: Vec<ScoreTriple>,
    pub status: CellStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LueSweep {
    pub records: Vec<LueRecord>,
    /// Per (sigma, flux, metric) over successful replications.
    pub summary: Vec<(f64, &'static str, &'static str, Summary)>,
    pub failures: usize,
}

impl LueSweep {
    /// Per-replication values of `metric` ("r2", "rmse" or "bias") for `flux`.
    pub fn values(&self, sigma: f64, flux: &str, metric: &str) -> Vec<f64> {
        let Some(k) = FLUXES.iter().position(|f| *f == flux) else { return Vec::new() };
        self.records
            .iter()
            .filter(|r| r.sigma == sigma && r.status == CellStatus::Ok)
            .filter_map(|r| r.scores.get(k).and_then(|s| metric_value(s, metric)))
            .collect()
    }

    pub fn summary_for(&self, sigma: f64, flux: &str, metric: &str) -> Option<&Summary> {
        self.summary.iter().find(|(s, f, m, _)| *s == sigma && *f == flux && *m == metric).map(|(_, _, _, s)| s)
    }
}

fn metric_value(s: &ScoreTriple, metric: &str) -> Option<f64> {
    match metric {
        "r2" => s.r2,
        "rmse" => Some(s.rmse),
        "bias" => Some(s.bias),
        _ => None,
    }
}

const METRICS: [&str; 3] = ["r2", "rmse", "bias"];

pub(crate) fn lue_learner(cfg: &ExperimentConfig, seed: u64) -> LearnerSpec {
    let l = &cfg.learners;
    LearnerSpec::gbt(GbtConfig {
        n_stages: l.lue_gbt_stages,
        learning_rate: l.gbt_learning_rate,
        max_depth: l.lue_gbt_max_depth,
        min_samples_leaf: l.lue_gbt_min_samples_leaf,
        ..Default::default()
    })
    .with_seed(seed)
}

/// Final-stage learner for `θ(X)`: shallow boosting whose number of stages
/// is chosen on held-out rows, so it adapts to the noise level.
pub(crate) fn lue_final_learner(cfg: &ExperimentConfig, seed: u64) -> LearnerSpec {
    let l = &cfg.learners;
    LearnerSpec::gbt(GbtConfig {
        n_stages: l.lue_final_gbt_stages,
        learning_rate: l.gbt_learning_rate,
        max_depth: l.lue_final_gbt_max_depth,
        min_samples_leaf: l.lue_final_gbt_min_samples_leaf,
        validation_fraction: l.lue_final_validation_fraction,
        n_iter_no_change: l.lue_final_n_iter_no_change,
        ..Default::default()
    })
    .with_seed(derive_seed(seed, &[tag("final")]))
}

/// Adds the transformed light column when requested and returns the
/// treatment transform to use on `t_column`.
pub(crate) fn apply_light_transform(
    frame: FluxFrame,
    transform: LightTransform,
    t_column: &str,
    nee_column: &str,
) -> Result<(FluxFrame, TreatmentTransform), ExperimentError> {
    match transform {
        LightTransform::Identity => Ok((frame, TreatmentTransform::Identity)),
        LightTransform::Hyperbola => {
            let tr = transform_sw(&frame, t_column, nee_column, WindowGeometry::default())
                .map_err(|e| ExperimentError::Io(format!("light response transform: {e}")))?;
            let frame = frame.with_column(SW_TRANSFORMED, tr.values)?;
            Ok((frame, TreatmentTransform::Precomputed(SW_TRANSFORMED.to_string())))
        }
    }
}

fn run_cell(cfg: &ExperimentConfig, sigma: f64, rep: usize) -> LueRecord {
    let base = cfg.seed;
    let seed = derive_seed(base, &[tag("lue"), sigma.to_bits(), rep as u64]);
    let outcome = (|| -> Result<Vec<ScoreTriple>, String> {
        let drivers = bundled_drivers(&DriverConfig {
            n_years: cfg.lue_driver_years,
            seed: derive_seed(base, &[tag("lue-drivers"), rep as u64]),
            ..Default::default()
        })
        .map_err(|e| e.to_string())?;
        let data = gen_lue(&drivers, &LueGenConfig { sigma, seed: derive_seed(base, &[tag("lue-noise"), sigma.to_bits(), rep as u64]) })
            .map_err(|e| e.to_string())?;
        let (data, f) = apply_light_transform(data, cfg.light_transform, "SW_IN", "NEE_syn").map_err(|e| e.to_string())?;
        let roles = RoleSpec::new("NEE_syn", "SW_IN", &["VPD", "TA"], &[SW_POT_SM, SW_POT_SM_DIFF], f);
        let spec = lue_learner(cfg, seed);
        let dml = DmlConfig { k_folds: cfg.folds, seed, folds: FoldScheme::Shuffled, composition: Composition::NegatedAdditive };
        let (prob, po) = cross_fit(&data, &roles, &spec, &spec, &dml).map_err(|e| e.to_string())?;
        let het = estimate_heterogeneous_effect(&po, prob.modifiers.view(), &roles.x, &lue_final_learner(cfg, seed), None)
            .map_err(|e| e.to_string())?;
        let model = HybridModel::plug_in(&po, Effect::Heterogeneous(het), roles, Composition::NegatedAdditive);
        let gpp = model.effect_term(&data).map_err(|e| e.to_string())?;
        let reco = model.g(&data).map_err(|e| e.to_string())?;
        let nee = predict_hybrid(&model, &data).map_err(|e| e.to_string())?;
        let col = |c: &str| data.column(c).map_err(|e| e.to_string());
        let pairs: [(&[f64], &[f64]); 4] = [
            (&gpp, col("GPP_syn")?),
            (&reco, col("RECO_syn")?),
            (&nee, col("NEE_syn_clean")?),
            (&nee, col("NEE_syn")?),
        ];
        pairs.iter().map(|(x, y)| score(x, y).map_err(|e| e.to_string())).collect()
    })();
    match outcome {
        Ok(scores) => LueRecord { sigma, rep, seed, scores, status: CellStatus::Ok },
        Err(msg) => LueRecord { sigma, rep, seed, scores: Vec::new(), status: CellStatus::Failed(msg) },
    }
}

/// Runs every (sigma, replication) cell and writes `lue_runs.csv`,
/// `lue_summary.csv`, `lue_table.txt` and `lue_summary.svg`.
pub fn run_lue_simulation(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<LueSweep, ExperimentError> {
    cfg.validate()?;
    let cells: Vec<(f64, usize)> =
        cfg.sigma_grid.iter().flat_map(|&s| (0..cfg.replications).map(move |r| (s, r))).collect();
    let fp = fingerprint(&(cfg.seed, &cfg.learners, cfg.folds, cfg.lue_driver_years, cfg.light_transform));
    let cell_dir = cfg.output_dir.join("cells").join(format!("lue-{}-{fp}", cfg.light_transform.name()));
    let name = |c: &(f64, usize)| format!("s{}_r{}", slug(c.0), c.1);
    let records = run_cells(&cells, &cell_dir, name, |c| run_cell(cfg, c.0, c.1), opts)?;

    let mut sweep = LueSweep { records, summary: Vec::new(), failures: 0 };
    sweep.failures = sweep.records.iter().filter(|r| r.status != CellStatus::Ok).count();
    for &sigma in &cfg.sigma_grid {
        for flux in FLUXES {
            for metric in METRICS {
                if let Some(s) = summarize_values(&sweep.values(sigma, flux, metric)) {
                    sweep.summary.push((sigma, flux, metric, s));
                }
            }
        }
    }
    write_outputs(cfg, &sweep)?;
    Ok(sweep)
}

fn write_outputs(cfg: &ExperimentConfig, sweep: &LueSweep) -> Result<(), ExperimentError> {
    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;

    let path = out.join("lue_runs.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| io_err(&path, e))?;
    w.write_record(["sigma", "rep", "seed", "flux", "r2", "rmse", "bias", "status", "message"])
        .map_err(|e| io_err(&path, e))?;
    for r in &sweep.records {
        let base = [format_number(r.sigma), r.rep.to_string(), r.seed.to_string()];
        match &r.status {
            CellStatus::Ok => {
                for (flux, s) in FLUXES.iter().zip(&r.scores) {
                    let r2 = s.r2.map_or_else(|| "NA".to_string(), format_number);
                    w.write_record(base.iter().cloned().chain([
                        flux.to_string(),
                        r2,
                        format_number(s.rmse),
                        format_number(s.bias),
                        "ok".into(),
                        String::new(),
                    ]))
                    .map_err(|e| io_err(&path, e))?;
                }
            }
            CellStatus::Failed(m) => {
                w.write_record(base.iter().cloned().chain(
                    ["NA", "NA", "NA", "NA", "failed"].into_iter().map(String::from).chain([m.clone()]),
                ))
                .map_err(|e| io_err(&path, e))?;
            }
        }
    }
    w.flush().map_err(|e| io_err(&path, e))?;

    let path = out.join("lue_summary.csv");
    let rows: Vec<(Vec<String>, Summary)> = sweep
        .summary
        .iter()
        .map(|(s, f, m, sum)| (vec![format_number(*s), f.to_string(), m.to_string()], sum.clone()))
        .collect();
    let file = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
    crate::metrics::write_summary_csv(file, &["sigma", "flux", "metric"], &rows).map_err(|e| io_err(&path, e))?;

    let path = out.join("lue_table.txt");
    fs::write(&path, render_table(cfg, sweep)).map_err(|e| io_err(&path, e))?;

    let series: Vec<Series> = FLUXES
        .iter()
        .map(|flux| Series {
            name: flux.to_string(),
            points: cfg
                .sigma_grid
                .iter()
                .filter_map(|&s| sweep.summary_for(s, flux, "r2").map(|m| (s, m.median, m.q25, m.q75)))
                .collect(),
        })
        .collect();
    let svg = svg_chart("Flux partitioning accuracy", "noise scale sigma", "median R2 (IQR)", false, &series);
    let path = out.join("lue_summary.svg");
    fs::write(&path, svg).map_err(|e| io_err(&path, e))
}

/// Median (q25, q75) of R² and RMSE per noise level and flux.
fn render_table(cfg: &ExperimentConfig, sweep: &LueSweep) -> String {
    let mut t = String::new();
    for metric in ["r2", "rmse"] {
        let _ = write!(t, "{:<8}", format!("{metric}"));
        for flux in FLUXES {
            let _ = write!(t, " | {:^26}", flux);
        }
        t.push('\n');
        for &sigma in &cfg.sigma_grid {
            let _ = write!(t, "{:<8}", format_number(sigma));
            for flux in FLUXES {
                let cell = sweep
                    .summary_for(sigma, flux, metric)
                    .map(|s| format!("{:.3} ({:.3}, {:.3})", s.median, s.q25, s.q75))
                    .unwrap_or_else(|| "NA".into());
                let _ = write!(t, " | {cell:^26}");
            }
            t.push('\n');
        }
        t.push('\n');
    }
    t
}
