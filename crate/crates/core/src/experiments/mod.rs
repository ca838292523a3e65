//! Experiment orchestration: simulation sweeps and runs on user data, with
//! seeded replication, a bounded job pool, resumable per-cell results and
//! CSV/SVG outputs.

mod config;
mod data;
mod lue;
mod output;
mod q10;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

pub use config::{
    EffectKind, ExperimentConfig, ExperimentKind, LearnerSettings, LightTransform, Method, Regularization,
    RoleOverrides, DESK_REPLICATIONS, PAPER_REPLICATIONS,
};
pub use data::{data_roles, run_on_csv, DataPlan, DataRunOutcome};
pub use lue::{run_lue_simulation, LueRecord, LueSweep, FLUXES, SW_TRANSFORMED};
pub use output::{svg_chart, Series};
pub use q10::{run_q10_simulation, Q10Record, Q10Sweep, T_REF};

use crate::dataset::DatasetError;
use crate::dml::DmlError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: {key}: {message}")]
    Value { line: usize, key: String, message: String },
    #[error("{key}: {message}")]
    Invalid { key: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExperimentError {
    #[error("configuration: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Dml(#[from] DmlError),
    #[error("io: {0}")]
    Io(String),
}

impl ExperimentError {
    /// Errors caused by the configuration or the data it references, as
    /// opposed to failures while computing.
    pub fn is_config(&self) -> bool {
        matches!(self, Self::Config(_) | Self::Dataset(_) | Self::Dml(DmlError::Dataset(_)))
    }
}

pub(crate) fn io_err(path: &Path, e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Io(format!("{}: {e}", path.display()))
}

/// Execution settings that do not change results.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    /// Concurrent cells; 0 uses every available core.
    pub jobs: usize,
    /// Skip cells whose result file already exists.
    pub resume: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { jobs: 1, resume: false }
    }
}

/// Outcome of one replicated cell; failures are recorded, not raised.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub enum CellStatus {
    Ok,
    Failed(String),
}

/// Runs `work` for every cell on a pool of `opts.jobs` threads, persisting
/// each result to `cell_dir/<name>.json`; with `opts.resume`, existing files
/// are loaded instead of recomputed. Results come back in `cells` order.
pub(crate) fn run_cells<C, R, F>(
    cells: &[C],
    cell_dir: &Path,
    name: impl Fn(&C) -> String + Sync,
    work: F,
    opts: &RunOptions,
) -> Result<Vec<R>, ExperimentError>
where
    C: Sync,
    R: Serialize + DeserializeOwned + Send,
    F: Fn(&C) -> R + Sync,
{
    fs::create_dir_all(cell_dir).map_err(|e| io_err(cell_dir, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| ExperimentError::Io(format!("thread pool: {e}")))?;
    pool.install(|| {
        cells
            .par_iter()
            .map(|cell| {
                let path = cell_dir.join(format!("{}.json", name(cell)));
                if opts.resume {
                    if let Some(done) = fs::read(&path).ok().and_then(|b| serde_json::from_slice::<R>(&b).ok()) {
                        return Ok(done);
                    }
                }
                let result = work(cell);
                write_atomic(&path, &serde_json::to_vec(&result).map_err(|e| io_err(&path, e))?)?;
                Ok(result)
            })
            .collect()
    })
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ExperimentError> {
    let tmp: PathBuf = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

/// Short stable hash of the settings a cell result depends on, so resumed
/// runs never reuse cells computed under different settings.
pub(crate) fn fingerprint(settings: &impl Serialize) -> String {
    let json = serde_json::to_string(settings).unwrap_or_default();
    format!("{:016x}", crate::seed::tag(&json))
}

/// File-name-safe rendering of a real parameter.
pub(crate) fn slug(v: f64) -> String {
    let s = format!("{v}");
    if s.len() > 16 {
        return format!("x{:016x}", v.to_bits());
    }
    s.replace('.', "p").replace('-', "m")
}
