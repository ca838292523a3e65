//! Flux-tower style time series: loading, quality filtering, smoothing and
//! the assignment of columns to causal roles.
//!
//! Column conventions follow the half-hourly flux products: `TA` (°C),
//! `SW_IN` and `SW_POT` (W m⁻²), `VPD` (hPa), and `NEE`/`RECO`/`GPP`
//! (µmol CO2 m⁻² s⁻¹). A `<col>_QC` companion column marks measured rows
//! with value 0. Derived seasonal drivers are emitted as `SW_POT_sm` and
//! `SW_POT_sm_diff`.

mod csvio;
mod frame;
mod roles;
mod series;

use thiserror::Error;

pub use csvio::{load_csv, load_csv_with, parse_csv, write_csv, write_csv_to, LoadOptions, MISSING_SENTINEL, TIME_COLUMNS};
pub use frame::{FluxFrame, Timestamp};
pub use roles::{RoleSpec, TreatmentTransform};
pub use series::{central_difference, moving_average_smooth};

pub const SW_POT_SM: &str = "SW_POT_sm";
pub const SW_POT_SM_DIFF: &str = "SW_POT_sm_diff";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("missing column {0}")]
    MissingColumn(String),
    #[error("row {row}, column {column}: cannot parse {cell:?} as a number")]
    Parse { row: usize, column: String, cell: String },
    #[error("timestamps not strictly increasing at row {row}")]
    NonMonotoneTimestamps { row: usize },
    #[error("row {row}: invalid timestamp {value}")]
    InvalidTimestamp { row: usize, value: i64 },
    #[error("column {column}: expected {expected} values, found {found}")]
    LengthMismatch { column: String, expected: usize, found: usize },
    #[error("train and test year sets overlap in {0}")]
    OverlappingYears(i32),
    #[error("empty series")]
    EmptySeries,
    #[error("series needs at least {needed} values, found {found}")]
    SeriesTooShort { needed: usize, found: usize },
    #[error("smoothing window of {0} samples is shorter than one sample")]
    InvalidWindow(f64),
    #[error("invalid role assignment: {0}")]
    InvalidRoles(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error("io: {0}")]
    Io(String),
}

/// Adds `SW_POT_sm` (10-day centered mean of `SW_POT`) and `SW_POT_sm_diff`
/// (its central difference per sample).
pub fn derive_seasonal_drivers(frame: &FluxFrame, window_days: f64) -> Result<FluxFrame, DatasetError> {
    let spd = frame.samples_per_day().unwrap_or(48.0);
    let sm = moving_average_smooth(frame.column("SW_POT")?, window_days, spd)?;
    let diff = central_difference(&sm)?;
    frame.with_column(SW_POT_SM, sm)?.with_column(SW_POT_SM_DIFF, diff)
}
