//! Flat `key = value` experiment configuration.

use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExperimentKind {
    Q10Sim,
    Q10Data,
    LueSim,
    LueData,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Q10Sim => "q10-sim",
            Self::Q10Data => "q10-data",
            Self::LueSim => "lue-sim",
            Self::LueData => "lue-data",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "q10-sim" => Ok(Self::Q10Sim),
            "q10-data" => Ok(Self::Q10Data),
            "lue-sim" => Ok(Self::LueSim),
            "lue-data" => Ok(Self::LueData),
            _ => Err(format!("unknown experiment {s:?} (expected q10-sim, q10-data, lue-sim or lue-data)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    DmlRf,
    DmlMlp,
    DmlGbt,
    Gdhm,
    GdhmTa,
}

impl Method {
    pub const ALL: [Method; 5] = [Self::DmlRf, Self::DmlMlp, Self::DmlGbt, Self::Gdhm, Self::GdhmTa];

    pub fn name(self) -> &'static str {
        match self {
            Self::DmlRf => "dml-rf",
            Self::DmlMlp => "dml-mlp",
            Self::DmlGbt => "dml-gbt",
            Self::Gdhm => "gdhm",
            Self::GdhmTa => "gdhm-ta",
        }
    }

    pub fn is_dml(self) -> bool {
        matches!(self, Self::DmlRf | Self::DmlMlp | Self::DmlGbt)
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method {s:?} (expected dml-rf, dml-mlp, dml-gbt, gdhm or gdhm-ta)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regularization {
    None,
    Dropout,
    WeightDecay,
}

impl Regularization {
    pub fn name(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Dropout => "dropout",
            Self::WeightDecay => "weight-decay",
        }
    }
}

impl FromStr for Regularization {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(Self::None),
            "dropout" => Ok(Self::Dropout),
            "weight-decay" => Ok(Self::WeightDecay),
            _ => Err(format!("unknown regularization {s:?} (expected none, dropout or weight-decay)")),
        }
    }
}

/// Treatment transform for the light-response problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LightTransform {
    Identity,
    Hyperbola,
}

impl LightTransform {
    pub fn name(self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::Hyperbola => "hyperbola",
        }
    }
}

impl FromStr for LightTransform {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "identity" => Ok(Self::Identity),
            "hyperbola" => Ok(Self::Hyperbola),
            _ => Err(format!("unknown light transform {s:?} (expected identity or hyperbola)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EffectKind {
    Constant,
    Heterogeneous,
}

impl FromStr for EffectKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "constant" => Ok(Self::Constant),
            "heterogeneous" => Ok(Self::Heterogeneous),
            _ => Err(format!("unknown effect {s:?} (expected constant or heterogeneous)")),
        }
    }
}

/// Learner hyperparameters shared by the experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSettings {
    pub rf_trees: usize,
    pub rf_min_samples_leaf: usize,
    pub gbt_stages: usize,
    pub gbt_learning_rate: f64,
    pub gbt_max_depth: usize,
    pub gbt_min_samples_leaf: usize,
    /// Boosting settings of the light-response experiments.
    pub lue_gbt_stages: usize,
    pub lue_gbt_max_depth: usize,
    pub lue_gbt_min_samples_leaf: usize,
    /// Final-stage boosting of the light-response experiments; the number of
    /// stages is capped by `lue_final_gbt_stages` and chosen on a held-out
    /// fraction of rows.
    pub lue_final_gbt_stages: usize,
    pub lue_final_gbt_max_depth: usize,
    pub lue_final_gbt_min_samples_leaf: usize,
    pub lue_final_validation_fraction: f64,
    pub lue_final_n_iter_no_change: usize,
    pub mlp_iterations: usize,
    pub mlp_learning_rate: f64,
    /// 0 means full batch.
    pub mlp_batch_size: usize,
    pub mlp_eval_every: usize,
    pub gdhm_iterations: usize,
    pub gdhm_learning_rate: f64,
    pub dropout_rate: f64,
    pub weight_decay: f64,
}

impl Default for LearnerSettings {
    fn default() -> Self {
        Self {
            rf_trees: 100,
            rf_min_samples_leaf: 20,
            gbt_stages: 100,
            gbt_learning_rate: 0.1,
            gbt_max_depth: 3,
            gbt_min_samples_leaf: 1,
            lue_gbt_stages: 300,
            lue_gbt_max_depth: 5,
            lue_gbt_min_samples_leaf: 50,
            lue_final_gbt_stages: 500,
            lue_final_gbt_max_depth: 2,
            lue_final_gbt_min_samples_leaf: 100,
            lue_final_validation_fraction: 0.2,
            lue_final_n_iter_no_change: 20,
            mlp_iterations: 2000,
            mlp_learning_rate: 1e-3,
            mlp_batch_size: 256,
            mlp_eval_every: 50,
            gdhm_iterations: 10_000,
            gdhm_learning_rate: 1e-2,
            dropout_rate: 0.2,
            weight_decay: 0.1,
        }
    }
}

/// Column roles for runs on user data; empty fields take the preset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoleOverrides {
    pub y: Option<String>,
    pub t: Option<String>,
    pub x: Option<Vec<String>>,
    pub w: Option<Vec<String>>,
    /// `identity`, `q10` or `hyperbola`.
    pub transform: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub methods: Vec<Method>,
    pub sample_sizes: Vec<usize>,
    pub replications: usize,
    pub q10_values: Vec<f64>,
    pub regularization: Regularization,
    pub sigma_grid: Vec<f64>,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub folds: usize,
    /// Years of bundled drivers per Q10 dataset.
    pub q10_driver_years: u32,
    /// Years of bundled drivers per light-response site-year replicate.
    pub lue_driver_years: u32,
    pub light_transform: LightTransform,
    pub learners: LearnerSettings,
    /// Learner used by `run` on user data (dml-rf, dml-mlp or dml-gbt).
    pub learner: Method,
    pub effect: Option<EffectKind>,
    pub data_path: Option<PathBuf>,
    pub roles: RoleOverrides,
    /// Restrict user data to rows with zero potential radiation.
    pub night_only: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentKind::Q10Sim,
            methods: vec![Method::DmlRf, Method::DmlMlp, Method::Gdhm, Method::GdhmTa],
            sample_sizes: vec![250, 500, 1000, 2000, 4000, 8000, 16000],
            replications: DESK_REPLICATIONS,
            q10_values: vec![1.5],
            regularization: Regularization::None,
            sigma_grid: vec![0.0, 0.05, 0.1, 0.2, 0.4, 0.7, 1.0, 2.0],
            seed: 0,
            output_dir: PathBuf::from("results"),
            folds: 5,
            q10_driver_years: 10,
            lue_driver_years: 1,
            light_transform: LightTransform::Identity,
            learners: LearnerSettings::default(),
            learner: Method::DmlGbt,
            effect: None,
            data_path: None,
            roles: RoleOverrides::default(),
            night_only: false,
        }
    }
}

pub const DESK_REPLICATIONS: usize = 20;
pub const PAPER_REPLICATIONS: usize = 100;

fn list<T: FromStr>(v: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| format!("{s:?}: {e}")))
        .collect()
}

fn one<T: FromStr>(v: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| format!("{v:?}: {e}"))
}

fn names(v: &str) -> Vec<String> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

impl ExperimentConfig {
    /// Parses `key = value` lines; `#` starts a comment. Unknown keys and
    /// malformed values are errors.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line: line_no, message: format!("expected key = value, got {line:?}") })?;
            let (key, value) = (key.trim(), value.trim());
            cfg.set(key, value).map_err(|message| ConfigError::Value { line: line_no, key: key.to_string(), message })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        let l = &mut self.learners;
        match key {
            "experiment" => self.experiment = one(v)?,
            "methods" => self.methods = list(v)?,
            "sample_sizes" => self.sample_sizes = list(v)?,
            "replications" => self.replications = one(v)?,
            "q10_values" => self.q10_values = list(v)?,
            "regularization" => self.regularization = one(v)?,
            "sigma_grid" => self.sigma_grid = list(v)?,
            "seed" => self.seed = one(v)?,
            "output_dir" => self.output_dir = PathBuf::from(v),
            "folds" => self.folds = one(v)?,
            "q10_driver_years" => self.q10_driver_years = one(v)?,
            "lue_driver_years" => self.lue_driver_years = one(v)?,
            "light_transform" => self.light_transform = one(v)?,
            "learner" => self.learner = one(v)?,
            "effect" => self.effect = Some(one(v)?),
            "data_path" => self.data_path = Some(PathBuf::from(v)),
            "y" => self.roles.y = Some(v.to_string()),
            "t" => self.roles.t = Some(v.to_string()),
            "x" => self.roles.x = Some(names(v)),
            "w" => self.roles.w = Some(names(v)),
            "transform" => self.roles.transform = Some(v.to_string()),
            "night_only" => self.night_only = one(v)?,
            "rf_trees" => l.rf_trees = one(v)?,
            "rf_min_samples_leaf" => l.rf_min_samples_leaf = one(v)?,
            "gbt_stages" => l.gbt_stages = one(v)?,
            "gbt_learning_rate" => l.gbt_learning_rate = one(v)?,
            "gbt_max_depth" => l.gbt_max_depth = one(v)?,
            "gbt_min_samples_leaf" => l.gbt_min_samples_leaf = one(v)?,
            "lue_gbt_stages" => l.lue_gbt_stages = one(v)?,
            "lue_gbt_max_depth" => l.lue_gbt_max_depth = one(v)?,
            "lue_gbt_min_samples_leaf" => l.lue_gbt_min_samples_leaf = one(v)?,
            "lue_final_gbt_stages" => l.lue_final_gbt_stages = one(v)?,
            "lue_final_gbt_max_depth" => l.lue_final_gbt_max_depth = one(v)?,
            "lue_final_gbt_min_samples_leaf" => l.lue_final_gbt_min_samples_leaf = one(v)?,
            "lue_final_validation_fraction" => l.lue_final_validation_fraction = one(v)?,
            "lue_final_n_iter_no_change" => l.lue_final_n_iter_no_change = one(v)?,
            "mlp_iterations" => l.mlp_iterations = one(v)?,
            "mlp_learning_rate" => l.mlp_learning_rate = one(v)?,
            "mlp_batch_size" => l.mlp_batch_size = one(v)?,
            "mlp_eval_every" => l.mlp_eval_every = one(v)?,
            "gdhm_iterations" => l.gdhm_iterations = one(v)?,
            "gdhm_learning_rate" => l.gdhm_learning_rate = one(v)?,
            "dropout_rate" => l.dropout_rate = one(v)?,
            "weight_decay" => l.weight_decay = one(v)?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, message: &str| Err(ConfigError::Invalid { key: key.into(), message: message.into() });
        if self.replications == 0 {
            return bad("replications", "must be at least 1");
        }
        if self.methods.is_empty() {
            return bad("methods", "at least one method is required");
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.iter().any(|&n| n < 2 * self.folds) {
            return bad("sample_sizes", "every sample size must hold at least two rows per fold");
        }
        if self.q10_values.is_empty() || self.q10_values.iter().any(|q| !(*q > 0.0 && q.is_finite())) {
            return bad("q10_values", "values must be positive");
        }
        if self.sigma_grid.is_empty() || self.sigma_grid.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return bad("sigma_grid", "values must be non-negative");
        }
        if self.folds < 2 {
            return bad("folds", "must be at least 2");
        }
        if self.q10_driver_years == 0 || self.lue_driver_years == 0 {
            return bad("driver_years", "must be at least 1");
        }
        if !self.learner.is_dml() {
            return bad("learner", "must be dml-rf, dml-mlp or dml-gbt");
        }
        let l = &self.learners;
        if !(0.0..1.0).contains(&l.dropout_rate) {
            return bad("dropout_rate", "must lie in [0, 1)");
        }
        if !(l.weight_decay >= 0.0) {
            return bad("weight_decay", "must be non-negative");
        }
        if l.rf_trees == 0
            || l.gbt_stages == 0
            || l.lue_gbt_stages == 0
            || l.lue_final_gbt_stages == 0
            || l.mlp_iterations == 0
            || l.gdhm_iterations == 0
        {
            return bad("learners", "tree counts, stages and iterations must be positive");
        }
        if !(l.gbt_learning_rate > 0.0 && l.mlp_learning_rate > 0.0 && l.gdhm_learning_rate > 0.0) {
            return bad("learners", "learning rates must be positive");
        }
        if !(0.0..1.0).contains(&l.lue_final_validation_fraction) {
            return bad("lue_final_validation_fraction", "must lie in [0, 1)");
        }
        if l.lue_final_n_iter_no_change == 0 {
            return bad("lue_final_n_iter_no_change", "must be positive");
        }
        Ok(())
    }
}
