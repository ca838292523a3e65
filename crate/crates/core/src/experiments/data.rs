//! Hybrid-model fits on user-supplied CSV data.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::lue::{apply_light_transform, lue_final_learner, lue_learner, SW_TRANSFORMED};
use super::q10::{dml_learner, T_REF};
use super::{io_err, ConfigError, EffectKind, ExperimentConfig, ExperimentError, ExperimentKind, LightTransform};
use crate::dataset::{derive_seasonal_drivers, load_csv, RoleSpec, TreatmentTransform, SW_POT_SM, SW_POT_SM_DIFF, TIME_COLUMNS};
use crate::dml::{
    cross_fit, estimate_constant_effect, estimate_heterogeneous_effect, predict_hybrid, Composition, DmlConfig,
    DmlSummary, Effect, FoldScheme, HybridModel,
};
use crate::metrics::format_number;
use crate::seed::{derive_seed, tag};
use crate::synthgen::SEASONAL_WINDOW_DAYS;

/// Roles, composition and effect form resolved from a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPlan {
    pub roles: RoleSpec,
    pub composition: Composition,
    pub effect: EffectKind,
    pub light_transform: LightTransform,
}

/// Role preset of the configured data experiment with overrides applied.
pub fn data_roles(cfg: &ExperimentConfig) -> Result<DataPlan, ConfigError> {
    let invalid = |key: &str, message: String| ConfigError::Invalid { key: key.to_string(), message };
    let (y, t, x, w, composition, effect, transform): (&str, &str, Vec<&str>, _, _, _, &str) = match cfg.experiment {
        ExperimentKind::Q10Data => {
            ("NEE", "TA", vec![], vec![SW_POT_SM, SW_POT_SM_DIFF], Composition::MultiplicativeExp, EffectKind::Constant, "q10")
        }
        ExperimentKind::LueData => (
            "NEE",
            "SW_IN",
            vec!["VPD", "TA"],
            vec![SW_POT_SM, SW_POT_SM_DIFF],
            Composition::NegatedAdditive,
            EffectKind::Heterogeneous,
            cfg.light_transform.name(),
        ),
        other => return Err(invalid("experiment", format!("{} is a simulation; use the matching subcommand", other.name()))),
    };
    let o = &cfg.roles;
    let owned = |v: Vec<&str>| v.into_iter().map(String::from).collect::<Vec<_>>();
    let y = o.y.clone().unwrap_or_else(|| y.to_string());
    let t = o.t.clone().unwrap_or_else(|| t.to_string());
    let x = o.x.clone().unwrap_or_else(|| owned(x));
    let w = o.w.clone().unwrap_or_else(|| owned(w));
    let transform = o.transform.as_deref().unwrap_or(transform);
    let (f, light_transform) = match transform {
        "identity" => (TreatmentTransform::Identity, LightTransform::Identity),
        "q10" => (TreatmentTransform::q10(T_REF), LightTransform::Identity),
        "hyperbola" => (TreatmentTransform::Precomputed(SW_TRANSFORMED.to_string()), LightTransform::Hyperbola),
        other => return Err(invalid("transform", format!("unknown transform {other:?} (expected identity, q10 or hyperbola)"))),
    };
    if !cfg.learner.is_dml() {
        return Err(invalid("learner", format!("{} is not a DML learner", cfg.learner.name())));
    }
    let effect = cfg.effect.unwrap_or(effect);
    if effect == EffectKind::Heterogeneous && x.is_empty() {
        return Err(invalid("x", "a heterogeneous effect needs at least one modifier column".into()));
    }
    let mut roles = RoleSpec::new(&y, &t, &[], &[], f);
    roles.x = x;
    roles.w = w;
    roles.validate(None).map_err(|e| invalid("roles", e.to_string()))?;
    Ok(DataPlan { roles, composition, effect, light_transform })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataRunOutcome {
    /// Rows used after filtering.
    pub n_rows: usize,
    pub effect: EffectKind,
    /// Scalar effect (for a heterogeneous fit, the best constant approximation).
    pub summary: DmlSummary,
    /// `exp(θ̂)` for the multiplicative composition.
    pub q10: Option<f64>,
}

fn header(path: &Path) -> Result<Vec<String>, ExperimentError> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| io_err(path, e))?;
    Ok(r.headers().map_err(|e| io_err(path, e))?.iter().map(String::from).collect())
}

/// Fits the configured hybrid model to `cfg.data_path` and writes
/// `dml_summary.txt`, `model.json` and `predictions.csv` to the output
/// directory.
pub fn run_on_csv(cfg: &ExperimentConfig) -> Result<DataRunOutcome, ExperimentError> {
    cfg.validate()?;
    let plan = data_roles(cfg)?;
    let path = cfg
        .data_path
        .as_ref()
        .ok_or_else(|| ConfigError::Invalid { key: "data_path".into(), message: "required for runs on data".into() })?;
    if !path.exists() {
        return Err(ConfigError::Invalid { key: "data_path".into(), message: format!("{} does not exist", path.display()) }.into());
    }
    let roles = &plan.roles;
    let available = header(path)?;
    let has = |c: &str| available.iter().any(|h| h == c);
    let derived_seasonal =
        roles.w.iter().chain(&roles.x).any(|c| (c == SW_POT_SM || c == SW_POT_SM_DIFF) && !has(c));
    let mut load: Vec<String> = roles
        .required_columns()
        .into_iter()
        .filter(|c| !(derived_seasonal && (c == SW_POT_SM || c == SW_POT_SM_DIFF)) && c != SW_TRANSFORMED)
        .collect();
    if (derived_seasonal || cfg.night_only) && !load.iter().any(|c| c == "SW_POT") {
        load.push("SW_POT".into());
    }
    load.retain(|c| !TIME_COLUMNS.contains(&c.as_str()));
    let mut seen = std::collections::HashSet::new();
    load.retain(|c| seen.insert(c.clone()));
    let names: Vec<&str> = load.iter().map(String::as_str).collect();
    let mut frame = load_csv(path, &names)?;
    if derived_seasonal {
        frame = derive_seasonal_drivers(&frame, SEASONAL_WINDOW_DAYS)?;
    }
    let (frame, _) = apply_light_transform(frame, plan.light_transform, &roles.t, &roles.y)?;

    let required = roles.required_columns();
    let required: Vec<&str> = required.iter().map(String::as_str).collect();
    let mut frame = frame.filter_measured(&required)?;
    if cfg.night_only {
        let night = frame.nighttime_mask("SW_POT")?;
        frame = frame.select_rows(&(0..frame.len()).filter(|&i| night[i]).collect::<Vec<_>>());
    }
    if plan.composition == Composition::MultiplicativeExp {
        let y = frame.column(&roles.y)?;
        let keep: Vec<usize> = (0..frame.len()).filter(|&i| y[i] > 0.0).collect();
        frame = frame.select_rows(&keep);
    }

    let seed = derive_seed(cfg.seed, &[tag("data-run")]);
    let (spec, final_spec) = match (cfg.experiment, cfg.learner) {
        (ExperimentKind::LueData, super::Method::DmlGbt) => (lue_learner(cfg, seed), lue_final_learner(cfg, seed)),
        (_, m) => (dml_learner(cfg, m, seed), dml_learner(cfg, m, seed)),
    };
    let dml = DmlConfig { k_folds: cfg.folds, seed, folds: FoldScheme::Shuffled, composition: plan.composition };
    let (prob, po) = cross_fit(&frame, roles, &spec, &spec, &dml)?;
    let constant = estimate_constant_effect(&po)?;
    let summary = DmlSummary::new(&po, &constant);
    let effect = match plan.effect {
        EffectKind::Constant => Effect::Constant(constant.clone()),
        EffectKind::Heterogeneous => {
            Effect::Heterogeneous(estimate_heterogeneous_effect(&po, prob.modifiers.view(), &roles.x, &final_spec, None)?)
        }
    };
    let model = HybridModel::plug_in(&po, effect, roles.clone(), plan.composition);
    let theta = model.theta(&frame)?;
    let effect_term = model.effect_term(&frame)?;
    let g = model.g(&frame)?;
    let y_hat = predict_hybrid(&model, &frame)?;

    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let p = out.join("dml_summary.txt");
    fs::write(&p, summary.to_record()).map_err(|e| io_err(&p, e))?;
    let p = out.join("model.json");
    fs::write(&p, serde_json::to_vec(&model).map_err(|e| io_err(&p, e))?).map_err(|e| io_err(&p, e))?;
    let p = out.join("predictions.csv");
    let mut w = csv::Writer::from_path(&p).map_err(|e| io_err(&p, e))?;
    w.write_record(["TIMESTAMP", "y", "y_hat", "residual", "theta", "effect_term", "g"]).map_err(|e| io_err(&p, e))?;
    let y = frame.column(&roles.y)?;
    for i in 0..frame.len() {
        w.write_record([
            frame.timestamps()[i].0.to_string(),
            format_number(y[i]),
            format_number(y_hat[i]),
            format_number(y[i] - y_hat[i]),
            format_number(theta[i]),
            format_number(effect_term[i]),
            format_number(g[i]),
        ])
        .map_err(|e| io_err(&p, e))?;
    }
    w.flush().map_err(|e| io_err(&p, e))?;

    let q10 = (plan.composition == Composition::MultiplicativeExp && plan.effect == EffectKind::Constant)
        .then(|| constant.theta.exp());
    Ok(DataRunOutcome { n_rows: frame.len(), effect: plan.effect, summary, q10 })
}
