//! Moving-window rectangular-hyperbola fits of NEE against shortwave
//! radiation, producing the saturating light transform `f(SW)`.

use std::io::Write;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetError, FluxFrame, Timestamp};

pub const MIN_DAYTIME_POINTS: usize = 10;
const MAX_ITERATIONS: usize = 200;
const REL_TOLERANCE: f64 = 1e-10;
const LAMBDA_START: f64 = 1e-3;
const LAMBDA_MAX: f64 = 1e16;
/// Largest accepted change of ln α or ln β in one step.
const MAX_LOG_STEP: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LightCurveError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("window has {found} daytime points, needs at least {needed}")]
    TooFewDaytimePoints { found: usize, needed: usize },
    #[error("sw and nee lengths differ ({sw} vs {nee})")]
    LengthMismatch { sw: usize, nee: usize },
    #[error("series spans {days} days, needs at least {needed}")]
    SpanTooShort { days: usize, needed: usize },
    #[error("invalid window geometry: {0}")]
    InvalidWindow(String),
    #[error("invalid initial guess: {0}")]
    InvalidInit(String),
    #[error("no window could be fitted")]
    NoSuccessfulWindow,
    #[error("io: {0}")]
    Io(String),
}

/// `NEE = −αβ·SW/(α·SW + β) + γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperbolaParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// First and last timestamp of the fitted window, when fitted on a frame.
    pub window: Option<(Timestamp, Timestamp)>,
    pub converged: bool,
    pub sse: f64,
}

impl HyperbolaParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self { alpha, beta, gamma, window: None, converged: false, sse: f64::NAN }
    }

    /// Saturating uptake term `αβ·SW/(α·SW + β)`; zero for `SW ≤ 0`.
    pub fn uptake(&self, sw: f64) -> f64 {
        if sw <= 0.0 {
            0.0
        } else {
            self.alpha * self.beta * sw / (self.alpha * sw + self.beta)
        }
    }

    /// Modelled NEE at `sw`.
    pub fn nee(&self, sw: f64) -> f64 {
        self.gamma - self.uptake(sw)
    }

    /// Deterministic starting point derived from the data scale.
    pub fn initial_guess(sw: &[f64], nee: &[f64]) -> Self {
        let n = sw.len().min(nee.len()).max(1) as f64;
        let ms = sw.iter().sum::<f64>() / n;
        let mn = nee.iter().sum::<f64>() / n;
        let cov = sw.iter().zip(nee).map(|(s, y)| (s - ms) * (y - mn)).sum::<f64>() / n;
        let var = sw.iter().map(|s| (s - ms) * (s - ms)).sum::<f64>() / n;
        let slope = (cov / var).abs();
        let alpha = if slope.is_finite() { slope.clamp(1e-4, 1.0) } else { 1e-4 };
        let (lo, hi) = nee.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| (lo.min(-y), hi.max(-y)));
        let beta = (hi - lo).max(1.0);
        let night: Vec<f64> = sw.iter().zip(nee).filter(|(s, _)| **s <= 0.0).map(|(_, y)| *y).collect();
        let gamma = if night.is_empty() { mn } else { night.iter().sum::<f64>() / night.len() as f64 };
        Self::new(alpha, beta, gamma)
    }
}

fn sse_at(q: &Vector3<f64>, sw: &[f64], nee: &[f64]) -> f64 {
    let p = HyperbolaParams::new(q[0].exp(), q[1].exp(), q[2]);
    sw.iter().zip(nee).map(|(&s, &y)| (y - p.nee(s)).powi(2)).sum()
}

/// Levenberg–Marquardt least squares over `(ln α, ln β, γ)`. Returns the best
/// iterate; `converged` is false when the iteration cap was reached first.
pub fn fit_hyperbola(sw: &[f64], nee: &[f64], init: &HyperbolaParams) -> Result<HyperbolaParams, LightCurveError> {
    if sw.len() != nee.len() {
        return Err(LightCurveError::LengthMismatch { sw: sw.len(), nee: nee.len() });
    }
    if !(init.alpha > 0.0 && init.beta > 0.0 && init.gamma.is_finite()) {
        return Err(LightCurveError::InvalidInit(format!(
            "alpha {} and beta {} must be positive, gamma {} finite",
            init.alpha, init.beta, init.gamma
        )));
    }
    let (sw, nee): (Vec<f64>, Vec<f64>) =
        sw.iter().zip(nee).filter(|(s, y)| s.is_finite() && y.is_finite()).map(|(s, y)| (*s, *y)).unzip();
    let daytime = sw.iter().filter(|&&s| s > 0.0).count();
    if daytime < MIN_DAYTIME_POINTS {
        return Err(LightCurveError::TooFewDaytimePoints { found: daytime, needed: MIN_DAYTIME_POINTS });
    }

    let mut q = Vector3::new(init.alpha.ln(), init.beta.ln(), init.gamma);
    let mut sse = sse_at(&q, &sw, &nee);
    let mut lambda = LAMBDA_START;
    let mut converged = false;
    for _ in 0..MAX_ITERATIONS {
        if sse == 0.0 {
            converged = true;
            break;
        }
        let (alpha, beta) = (q[0].exp(), q[1].exp());
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for (&s, &y) in sw.iter().zip(&nee) {
            let s = s.max(0.0);
            let den = alpha * s + beta;
            let g = alpha * beta * s / den;
            let j = Vector3::new(
                -alpha * beta * beta * s / (den * den),
                -alpha * alpha * beta * s * s / (den * den),
                1.0,
            );
            let r = y - (q[2] - g);
            jtj += j * j.transpose();
            jtr += j * r;
        }
        let scale = jtj.diagonal().max().max(f64::MIN_POSITIVE);
        let mut damped = jtj;
        for k in 0..3 {
            damped[(k, k)] += lambda * jtj[(k, k)].max(1e-12 * scale);
        }
        let candidate = damped
            .cholesky()
            .map(|c| c.solve(&jtr))
            .filter(|d| d[0].abs() <= MAX_LOG_STEP && d[1].abs() <= MAX_LOG_STEP)
            .map(|d| q + d);
        match candidate.map(|c| (sse_at(&c, &sw, &nee), c)) {
            Some((new_sse, c)) if new_sse < sse => {
                let rel = (sse - new_sse) / sse;
                q = c;
                sse = new_sse;
                lambda = (lambda / 10.0).max(1e-12);
                if rel < REL_TOLERANCE {
                    converged = true;
                    break;
                }
            }
            _ => {
                lambda *= 10.0;
                // no descent left at machine precision
                if lambda > LAMBDA_MAX {
                    converged = true;
                    break;
                }
            }
        }
    }
    Ok(HyperbolaParams { alpha: q[0].exp(), beta: q[1].exp(), gamma: q[2], window: None, converged, sse })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowGeometry {
    pub window_days: usize,
    pub center_days: usize,
}

impl Default for WindowGeometry {
    fn default() -> Self {
        Self { window_days: 15, center_days: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum WindowStatus {
    Fitted(HyperbolaParams),
    /// Too few daytime points; the window's centre days use a neighbour.
    Skipped { daytime_points: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowFit {
    /// Day offsets from the first day of the series, end exclusive.
    pub start_day: usize,
    pub end_day: usize,
    pub status: WindowStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwTransform {
    pub values: Vec<f64>,
    pub windows: Vec<WindowFit>,
    /// Index into `windows` of the parameters applied to each row.
    pub row_window: Vec<usize>,
}

/// Fits one hyperbola per `window_days` window stepping by `center_days` and
/// maps each row through the parameters of the window whose centre block
/// contains it (boundary days use the nearest window). Rows with `SW ≤ 0`
/// map to zero.
pub fn transform_sw(
    frame: &FluxFrame,
    sw_column: &str,
    nee_column: &str,
    geometry: WindowGeometry,
) -> Result<SwTransform, LightCurveError> {
    let WindowGeometry { window_days: w, center_days: c } = geometry;
    if c == 0 || w < c || (w - c) % 2 != 0 {
        return Err(LightCurveError::InvalidWindow(format!(
            "window {w} days and centre {c} days must be positive with an even difference"
        )));
    }
    let sw = frame.column(sw_column)?;
    let nee = frame.column(nee_column)?;
    let ts = frame.timestamps();
    if ts.is_empty() {
        return Err(LightCurveError::SpanTooShort { days: 0, needed: w });
    }
    let first = ts[0].days_since_epoch().floor();
    let day: Vec<usize> = ts.iter().map(|t| (t.days_since_epoch().floor() - first) as usize).collect();
    let n_days = day[day.len() - 1] + 1;
    if n_days < w {
        return Err(LightCurveError::SpanTooShort { days: n_days, needed: w });
    }
    let n_windows = (n_days - w) / c + 1;
    let offset = (w - c) / 2;

    let windows: Vec<WindowFit> = (0..n_windows)
        .into_par_iter()
        .map(|k| {
            let (start_day, end_day) = (k * c, k * c + w);
            let lo = day.partition_point(|&d| d < start_day);
            let hi = day.partition_point(|&d| d < end_day);
            let (s, y) = (&sw[lo..hi], &nee[lo..hi]);
            let init = HyperbolaParams::initial_guess(s, y);
            let status = match fit_hyperbola(s, y, &init) {
                Ok(mut p) => {
                    p.window = Some((ts[lo], ts[hi - 1]));
                    WindowStatus::Fitted(p)
                }
                Err(LightCurveError::TooFewDaytimePoints { found, .. }) => WindowStatus::Skipped { daytime_points: found },
                Err(e) => unreachable!("window inputs are aligned and the guess is valid: {e}"),
            };
            WindowFit { start_day, end_day, status }
        })
        .collect();

    let fitted: Vec<usize> =
        windows.iter().enumerate().filter(|(_, w)| matches!(w.status, WindowStatus::Fitted(_))).map(|(k, _)| k).collect();
    if fitted.is_empty() {
        return Err(LightCurveError::NoSuccessfulWindow);
    }
    // nearest fitted window for every window index, ties to the earlier one
    let donor: Vec<usize> = (0..n_windows)
        .map(|k| *fitted.iter().min_by_key(|&&f| (f.abs_diff(k), f)).expect("non-empty"))
        .collect();

    let mut values = Vec::with_capacity(sw.len());
    let mut row_window = Vec::with_capacity(sw.len());
    for (&d, &s) in day.iter().zip(sw) {
        let k = donor[(d.saturating_sub(offset) / c).min(n_windows - 1)];
        let WindowStatus::Fitted(p) = &windows[k].status else { unreachable!("donor windows are fitted") };
        values.push(if s.is_finite() { p.uptake(s) } else { f64::NAN });
        row_window.push(k);
    }
    Ok(SwTransform { values, windows, row_window })
}

/// Writes one row per window: `start_day,end_day,alpha,beta,gamma,sse,converged,status`.
pub fn write_windows_csv<W: Write>(out: W, windows: &[WindowFit]) -> Result<(), LightCurveError> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| LightCurveError::Io(e.to_string());
    w.write_record(["start_day", "end_day", "alpha", "beta", "gamma", "sse", "converged", "status"]).map_err(io)?;
    for win in windows {
        let (a, b, g, sse, conv, status) = match &win.status {
            WindowStatus::Fitted(p) => (
                p.alpha.to_string(),
                p.beta.to_string(),
                p.gamma.to_string(),
                p.sse.to_string(),
                p.converged.to_string(),
                "fitted".to_string(),
            ),
            WindowStatus::Skipped { daytime_points } => (
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                format!("skipped ({daytime_points} daytime points)"),
            ),
        };
        w.write_record([win.start_day.to_string(), win.end_day.to_string(), a, b, g, sse, conv, status]).map_err(io)?;
    }
    w.flush().map_err(|e| LightCurveError::Io(e.to_string()))
}
