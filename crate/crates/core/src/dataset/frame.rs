use std::collections::BTreeSet;

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike};
use indexmap::IndexMap;

use super::DatasetError;

/// Half-hourly instant encoded as the integer `YYYYMMDDHHMM`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub struct Timestamp(pub i64);

impl Timestamp {
    pub fn from_datetime(dt: NaiveDateTime) -> Self {
        let d = dt.date();
        Timestamp(
            d.year() as i64 * 100_000_000
                + d.month() as i64 * 1_000_000
                + d.day() as i64 * 10_000
                + dt.hour() as i64 * 100
                + dt.minute() as i64,
        )
    }

    pub fn to_datetime(self) -> Option<NaiveDateTime> {
        let v = self.0;
        let minute = (v % 100) as u32;
        let hour = ((v / 100) % 100) as u32;
        let day = ((v / 10_000) % 100) as u32;
        let month = ((v / 1_000_000) % 100) as u32;
        let year = (v / 100_000_000) as i32;
        NaiveDate::from_ymd_opt(year, month, day)?.and_hms_opt(hour, minute, 0)
    }

    pub fn year(self) -> i32 {
        (self.0 / 100_000_000) as i32
    }

    /// Days (fractional) since 1970-01-01.
    pub fn days_since_epoch(self) -> f64 {
        let dt = self.to_datetime().expect("timestamp validated at construction");
        dt.and_utc().timestamp() as f64 / 86_400.0
    }

    pub fn day_of_year(self) -> u32 {
        self.to_datetime().map(|d| d.ordinal()).unwrap_or(0)
    }
}

impl std::fmt::Display for Timestamp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Columnar table of time-indexed numeric series.
///
/// Each column carries a quality mask (`true` = measured). Missing values are
/// stored as `NaN` and are always marked unmeasured. The frame is immutable:
/// every transforming operation returns a new frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxFrame {
    timestamps: Vec<Timestamp>,
    columns: IndexMap<String, Vec<f64>>,
    quality: IndexMap<String, Vec<bool>>,
}

impl FluxFrame {
    /// Frame with timestamps and no columns.
    pub fn new(timestamps: Vec<Timestamp>) -> Result<Self, DatasetError> {
        for (i, w) in timestamps.windows(2).enumerate() {
            if w[1] <= w[0] {
                return Err(DatasetError::NonMonotoneTimestamps { row: i + 1 });
            }
        }
        for (i, t) in timestamps.iter().enumerate() {
            if t.to_datetime().is_none() {
                return Err(DatasetError::InvalidTimestamp { row: i, value: t.0 });
            }
        }
        Ok(Self {
            timestamps,
            columns: IndexMap::new(),
            quality: IndexMap::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn timestamps(&self) -> &[Timestamp] {
        &self.timestamps
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.keys().map(String::as_str)
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.columns.contains_key(name)
    }

    pub fn column(&self, name: &str) -> Result<&[f64], DatasetError> {
        self.columns
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| DatasetError::MissingColumn(name.to_string()))
    }

    pub fn quality(&self, name: &str) -> Result<&[bool], DatasetError> {
        self.quality
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| DatasetError::MissingColumn(name.to_string()))
    }

    /// Returns a frame with `name` added (or replaced). Non-finite values are
    /// marked unmeasured; all finite values measured.
    pub fn with_column(&self, name: &str, values: Vec<f64>) -> Result<Self, DatasetError> {
        let mask = values.iter().map(|v| v.is_finite()).collect();
        self.with_column_masked(name, values, mask)
    }

    /// Returns a frame with `name` added using an explicit quality mask. The
    /// mask is AND-ed with finiteness so a measured row never holds `NaN`.
    pub fn with_column_masked(
        &self,
        name: &str,
        values: Vec<f64>,
        mask: Vec<bool>,
    ) -> Result<Self, DatasetError> {
        if values.len() != self.len() || mask.len() != self.len() {
            return Err(DatasetError::LengthMismatch {
                column: name.to_string(),
                expected: self.len(),
                found: values.len().min(mask.len()),
            });
        }
        let mask = mask
            .into_iter()
            .zip(&values)
            .map(|(m, v)| m && v.is_finite())
            .collect();
        let mut out = self.clone();
        out.columns.insert(name.to_string(), values);
        out.quality.insert(name.to_string(), mask);
        Ok(out)
    }

    /// Keeps only the rows at `rows` (in the given order, which must be
    /// strictly increasing).
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        debug_assert!(rows.windows(2).all(|w| w[0] < w[1]));
        let pick = |v: &Vec<f64>| rows.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let pick_b = |v: &Vec<bool>| rows.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Self {
            timestamps: rows.iter().map(|&i| self.timestamps[i]).collect(),
            columns: self
                .columns
                .iter()
                .map(|(k, v)| (k.clone(), pick(v)))
                .collect(),
            quality: self
                .quality
                .iter()
                .map(|(k, v)| (k.clone(), pick_b(v)))
                .collect(),
        }
    }

    /// Keeps only the named columns (in the given order).
    pub fn select_columns(&self, names: &[&str]) -> Result<Self, DatasetError> {
        let mut out = FluxFrame {
            timestamps: self.timestamps.clone(),
            columns: IndexMap::new(),
            quality: IndexMap::new(),
        };
        for &n in names {
            out.columns.insert(n.to_string(), self.column(n)?.to_vec());
            out.quality.insert(n.to_string(), self.quality(n)?.to_vec());
        }
        Ok(out)
    }

    /// Row-major feature matrix built from `names`.
    pub fn matrix(&self, names: &[String]) -> Result<ndarray::Array2<f64>, DatasetError> {
        let cols = names
            .iter()
            .map(|n| self.column(n))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ndarray::Array2::from_shape_fn(
            (self.len(), cols.len()),
            |(i, j)| cols[j][i],
        ))
    }

    /// Rows whose quality mask is true for every column in `required`.
    pub fn filter_measured(&self, required: &[&str]) -> Result<Self, DatasetError> {
        let masks = required
            .iter()
            .map(|c| self.quality(c))
            .collect::<Result<Vec<_>, _>>()?;
        let rows: Vec<usize> = (0..self.len())
            .filter(|&i| masks.iter().all(|m| m[i]))
            .collect();
        Ok(self.select_rows(&rows))
    }

    /// Partitions rows by calendar year. Rows whose year is in neither set are
    /// dropped.
    pub fn split_by_year(
        &self,
        train_years: &BTreeSet<i32>,
        test_years: &BTreeSet<i32>,
    ) -> Result<(Self, Self), DatasetError> {
        if let Some(&y) = train_years.intersection(test_years).next() {
            return Err(DatasetError::OverlappingYears(y));
        }
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, t) in self.timestamps.iter().enumerate() {
            let y = t.year();
            if train_years.contains(&y) {
                train.push(i);
            } else if test_years.contains(&y) {
                test.push(i);
            }
        }
        Ok((self.select_rows(&train), self.select_rows(&test)))
    }

    /// Boolean mask of nighttime rows, defined by zero potential radiation.
    pub fn nighttime_mask(&self, sw_pot_column: &str) -> Result<Vec<bool>, DatasetError> {
        Ok(self.column(sw_pot_column)?.iter().map(|&v| v == 0.0).collect())
    }

    /// Samples per day inferred from the median timestamp spacing.
    pub fn samples_per_day(&self) -> Option<f64> {
        if self.len() < 2 {
            return None;
        }
        let mut gaps: Vec<f64> = self
            .timestamps
            .windows(2)
            .map(|w| w[1].days_since_epoch() - w[0].days_since_epoch())
            .collect();
        gaps.sort_by(|a, b| a.total_cmp(b));
        let g = gaps[gaps.len() / 2];
        (g > 0.0).then(|| (1.0 / g).round())
    }
}
