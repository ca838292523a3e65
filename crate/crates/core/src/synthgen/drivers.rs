//! Bundled meteorological drivers: a deterministic stand-in for a mid-latitude
//! alpine grassland site (harmonic seasonal and diurnal cycles plus seeded
//! day-to-day weather).

use chrono::{Datelike, Duration, NaiveDate, Timelike};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::dataset::{DatasetError, FluxFrame, Timestamp};
use crate::seed::{derive_seed, rng, tag};

const SOLAR_CONSTANT: f64 = 1361.0;

#[derive(Debug, Clone, PartialEq)]
pub struct DriverConfig {
    pub start_year: i32,
    pub n_years: u32,
    pub latitude_deg: f64,
    pub seed: u64,
}

impl Default for DriverConfig {
    fn default() -> Self {
        Self {
            start_year: 2003,
            n_years: 1,
            latitude_deg: 47.1,
            seed: 0,
        }
    }
}

/// Top-of-atmosphere radiation on a horizontal plane (W/m²) at local solar
/// time `hour` on day `doy`; exactly zero below the horizon.
pub fn potential_radiation(latitude_deg: f64, doy: u32, hour: f64) -> f64 {
    let lat = latitude_deg.to_radians();
    let year_angle = 2.0 * std::f64::consts::PI * doy as f64 / 365.0;
    let decl = 23.44_f64.to_radians() * (2.0 * std::f64::consts::PI * (284.0 + doy as f64) / 365.0).sin();
    let hour_angle = (15.0 * (hour - 12.0)).to_radians();
    let cos_zenith = lat.sin() * decl.sin() + lat.cos() * decl.cos() * hour_angle.cos();
    if cos_zenith <= 0.0 {
        0.0
    } else {
        SOLAR_CONSTANT * (1.0 + 0.033 * year_angle.cos()) * cos_zenith
    }
}

/// Saturation vapour pressure over water (hPa) at `ta` °C.
pub fn saturation_vapour_pressure(ta: f64) -> f64 {
    6.1078 * (17.27 * ta / (ta + 237.3)).exp()
}

/// Half-hourly TA (°C), SW_IN and SW_POT (W/m²) and VPD (hPa).
pub fn bundled_drivers(cfg: &DriverConfig) -> Result<FluxFrame, DatasetError> {
    let start = NaiveDate::from_ymd_opt(cfg.start_year, 1, 1)
        .ok_or(DatasetError::InvalidTimestamp { row: 0, value: cfg.start_year as i64 })?
        .and_hms_opt(0, 0, 0)
        .unwrap();
    let end = NaiveDate::from_ymd_opt(cfg.start_year + cfg.n_years as i32, 1, 1)
        .unwrap()
        .and_hms_opt(0, 0, 0)
        .unwrap();
    let n_days = (end - start).num_days() as usize;
    let mut r = rng(cfg.seed);
    let mut normal = || -> f64 { r.sample(StandardNormal) };

    // daily weather states, AR(1)
    let (mut ta_a, mut cloud_a, mut rh_a) = (0.0, 0.0, 0.0);
    let mut daily = Vec::with_capacity(n_days);
    for _ in 0..n_days {
        ta_a = 0.75 * ta_a + 2.0 * normal();
        cloud_a = 0.6 * cloud_a + 1.2 * normal();
        rh_a = 0.7 * rh_a + 0.08 * normal();
        daily.push((ta_a, cloud_a, rh_a));
    }

    // sub-daily broken-cloud transmissivity, AR(1) at the half-hour scale
    let mut rc = rng(derive_seed(cfg.seed, &[tag("broken-cloud")]));
    let mut patch = 0.0;

    let n = n_days * 48;
    let mut timestamps = Vec::with_capacity(n);
    let (mut ta, mut sw_in, mut sw_pot, mut vpd) =
        (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for k in 0..n {
        let dt = start + Duration::minutes(30 * k as i64);
        timestamps.push(Timestamp::from_datetime(dt));
        let doy = dt.ordinal();
        let hour = dt.hour() as f64 + dt.minute() as f64 / 60.0 + 0.25;
        // linear interpolation of the daily states between day centres
        let pos = (k as f64 + 0.5) / 48.0 - 0.5;
        let d0 = (pos.floor().max(0.0) as usize).min(n_days - 1);
        let d1 = (d0 + 1).min(n_days - 1);
        let frac = (pos - d0 as f64).clamp(0.0, 1.0);
        let lerp = |a: f64, b: f64| a + frac * (b - a);
        let (t0, c0, h0) = daily[d0];
        let (t1, c1, h1) = daily[d1];
        let (anom, cloud, rh_anom) = (lerp(t0, t1), lerp(c0, c1), lerp(h0, h1));

        let clearness = 0.2 + 0.6 / (1.0 + (-cloud).exp());
        let season = (2.0 * std::f64::consts::PI * (doy as f64 - 20.0) / 365.0).cos();
        let diurnal = (2.0 * std::f64::consts::PI * (hour - 15.0) / 24.0).cos();
        let t = 7.5 - 10.0 * season + (2.0 + 5.0 * clearness) * diurnal + anom + 0.3 * normal();
        let pot = potential_radiation(cfg.latitude_deg, doy, hour);
        let z: f64 = rc.sample(StandardNormal);
        patch = 0.8 * patch + 0.6 * 0.35 * z;
        let sw = if pot > 0.0 { (clearness * pot * patch.exp() * (1.0 + 0.05 * normal())).clamp(0.0, pot) } else { 0.0 };
        let rh = (0.72 + rh_anom - 0.3 * (clearness - 0.5) - 0.15 * diurnal).clamp(0.1, 0.99);
        ta.push(t);
        sw_in.push(sw);
        sw_pot.push(pot);
        vpd.push(saturation_vapour_pressure(t) * (1.0 - rh));
    }
    FluxFrame::new(timestamps)?
        .with_column("TA", ta)?
        .with_column("SW_IN", sw_in)?
        .with_column("SW_POT", sw_pot)?
        .with_column("VPD", vpd)
}
