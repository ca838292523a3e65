//! Seeded generators for the synthetic respiration (Q10) and light-use
//! efficiency datasets.

mod drivers;

pub use drivers::{bundled_drivers, potential_radiation, saturation_vapour_pressure, DriverConfig};

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{derive_seasonal_drivers, DatasetError, FluxFrame, SW_POT_SM, SW_POT_SM_DIFF};
use crate::seed::rng;

/// Smoothing window for the seasonal radiation drivers.
pub const SEASONAL_WINDOW_DAYS: f64 = 10.0;
/// Conversion of radiation-driven uptake to µmol CO2 m⁻² s⁻¹ (molar mass of carbon).
pub const CARBON_MOLAR_MASS: f64 = 12.011;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("invalid generator configuration: {0}")]
    InvalidConfig(String),
    #[error("io: {0}")]
    Io(String),
}

/// `n` draws of Normal(0, sd²) conditioned on `[lo, hi]`, by rejection.
pub fn truncated_normal(n: usize, sd: f64, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
    assert!(lo < hi && sd > 0.0, "truncated_normal needs lo < hi and sd > 0");
    let mut r = rng(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let z: f64 = r.sample::<f64, _>(StandardNormal) * sd;
        if (lo..=hi).contains(&z) {
            out.push(z);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Q10GenConfig {
    pub q10: f64,
    pub t_ref: f64,
    /// Zero disables the multiplicative noise.
    pub noise_sd: f64,
    pub noise_bounds: (f64, f64),
    pub seed: u64,
}

impl Default for Q10GenConfig {
    fn default() -> Self {
        Self {
            q10: 1.5,
            t_ref: 15.0,
            noise_sd: 0.2,
            noise_bounds: (-0.95, 0.95),
            seed: 0,
        }
    }
}

impl Q10GenConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let (lo, hi) = self.noise_bounds;
        if !(self.q10 > 0.0) {
            return Err(SynthError::InvalidConfig("q10 must be positive".into()));
        }
        if !(self.noise_sd >= 0.0) || !(lo < hi) || lo <= -1.0 || lo != -hi {
            return Err(SynthError::InvalidConfig(
                "noise bounds must be symmetric, ordered and above -1; sd non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Base respiration from the smoothed seasonal radiation drivers, shifted so
/// its minimum is `0.75 · 0.1π`.
pub fn base_respiration(sw_pot_sm: &[f64], sw_pot_sm_diff: &[f64]) -> Vec<f64> {
    let raw: Vec<f64> = sw_pot_sm.iter().zip(sw_pot_sm_diff).map(|(s, d)| 0.01 * s - 0.005 * d).collect();
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    raw.iter().map(|r| 0.75 * (r - min + 0.1 * std::f64::consts::PI)).collect()
}

fn seasonal(drivers: &FluxFrame) -> Result<FluxFrame, SynthError> {
    if drivers.is_empty() {
        return Err(DatasetError::EmptySeries.into());
    }
    Ok(if drivers.has_column(SW_POT_SM) && drivers.has_column(SW_POT_SM_DIFF) {
        drivers.clone()
    } else {
        derive_seasonal_drivers(drivers, SEASONAL_WINDOW_DAYS)?
    })
}

/// Adds `SW_POT_sm`, `SW_POT_sm_diff`, `R_b_syn` and `R_eco_syn` to a frame
/// holding `TA` and `SW_POT`.
pub fn gen_q10(drivers: &FluxFrame, cfg: &Q10GenConfig) -> Result<FluxFrame, SynthError> {
    cfg.validate()?;
    let frame = seasonal(drivers)?;
    let rb = base_respiration(frame.column(SW_POT_SM)?, frame.column(SW_POT_SM_DIFF)?);
    let ta = frame.column("TA")?;
    let eps = if cfg.noise_sd > 0.0 {
        truncated_normal(ta.len(), cfg.noise_sd, cfg.noise_bounds.0, cfg.noise_bounds.1, cfg.seed)
    } else {
        vec![0.0; ta.len()]
    };
    let reco = rb
        .iter()
        .zip(ta)
        .zip(&eps)
        .map(|((b, t), e)| b * cfg.q10.powf(0.1 * (t - cfg.t_ref)) * (1.0 + e))
        .collect();
    Ok(frame.with_column("R_b_syn", rb)?.with_column("R_eco_syn", reco)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LueGenConfig {
    /// Scale of the multiplicative Gaussian noise on NEE.
    pub sigma: f64,
    pub seed: u64,
}

impl Default for LueGenConfig {
    fn default() -> Self {
        Self { sigma: 0.0, seed: 0 }
    }
}

/// Light-use efficiency: a bell curve in temperature around 20 °C times a
/// vapour-pressure-deficit limitation above 10 hPa.
pub fn light_use_efficiency(ta: f64, vpd: f64) -> f64 {
    let temp = (-(0.1 * (ta - 20.0)).powi(2)).exp();
    let dry = (-0.1 * (vpd - 10.0)).exp().min(1.0);
    0.5 * temp * dry
}

/// Adds `LUE_syn`, `GPP_syn`, `RECO_syn`, `NEE_syn_clean`, `NEE_syn` and the
/// seasonal radiation drivers to a frame holding `TA`, `VPD`, `SW_IN` and
/// `SW_POT`. RECO is the noise-free respiration model with Q10 = 1.5; noise
/// enters once, multiplicatively on NEE.
pub fn gen_lue(drivers: &FluxFrame, cfg: &LueGenConfig) -> Result<FluxFrame, SynthError> {
    if !(cfg.sigma >= 0.0) {
        return Err(SynthError::InvalidConfig("sigma must be non-negative".into()));
    }
    let q10_cfg = Q10GenConfig { noise_sd: 0.0, ..Default::default() };
    let frame = gen_q10(drivers, &q10_cfg)?;
    let reco = frame.column("R_eco_syn")?.to_vec();
    let ta = frame.column("TA")?;
    let vpd = frame.column("VPD")?;
    let sw_in = frame.column("SW_IN")?;
    let lue: Vec<f64> = ta.iter().zip(vpd).map(|(t, v)| light_use_efficiency(*t, *v)).collect();
    let gpp: Vec<f64> = lue.iter().zip(sw_in).map(|(l, s)| l * s / CARBON_MOLAR_MASS).collect();
    let clean: Vec<f64> = gpp.iter().zip(&reco).map(|(g, r)| -g + r).collect();
    let noisy: Vec<f64> = if cfg.sigma > 0.0 {
        let mut r = rng(cfg.seed);
        clean.iter().map(|c| c * (1.0 + cfg.sigma * r.sample::<f64, _>(StandardNormal))).collect()
    } else {
        clean.clone()
    };
    let mut out = frame.select_columns(&frame.column_names().filter(|c| *c != "R_eco_syn" && *c != "R_b_syn").collect::<Vec<_>>())?;
    for (name, col) in [
        ("LUE_syn", lue),
        ("GPP_syn", gpp),
        ("RECO_syn", reco),
        ("NEE_syn_clean", clean),
        ("NEE_syn", noisy),
    ] {
        out = out.with_column(name, col)?;
    }
    Ok(out)
}

/// Path of the provenance sidecar written next to a generated CSV.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    let mut name = csv.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    csv.with_file_name(name)
}

/// Writes the generator configuration as pretty JSON beside `csv`.
pub fn write_sidecar<T: Serialize>(csv: &Path, generator: &str, config: &T) -> Result<PathBuf, SynthError> {
    let path = sidecar_path(csv);
    let doc = serde_json::json!({ "generator": generator, "config": config });
    let text = serde_json::to_string_pretty(&doc).map_err(|e| SynthError::Io(e.to_string()))?;
    std::fs::write(&path, text + "\n").map_err(|e| SynthError::Io(e.to_string()))?;
    Ok(path)
}
