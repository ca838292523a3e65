use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{DatasetError, FluxFrame, Timestamp};

/// Sentinel for missing values in flux-tower CSV products.
pub const MISSING_SENTINEL: f64 = -9999.0;

/// Accepted names for the time column, in order of preference.
pub const TIME_COLUMNS: [&str; 2] = ["TIMESTAMP", "TIMESTAMP_START"];

/// Options for [`load_csv`].
#[derive(Debug, Clone)]
pub struct LoadOptions {
    /// A row counts as measured when its `<col>_QC` value is at most this.
    pub max_qc: f64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self { max_qc: 0.0 }
    }
}

fn is_missing(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c.eq_ignore_ascii_case("nan") || c.eq_ignore_ascii_case("na")
}

/// Loads `columns` from a CSV file. An empty `columns` list loads every
/// non-QC column.
pub fn load_csv(path: &Path, columns: &[&str]) -> Result<FluxFrame, DatasetError> {
    load_csv_with(path, columns, &LoadOptions::default())
}

pub fn load_csv_with(
    path: &Path,
    columns: &[&str],
    opts: &LoadOptions,
) -> Result<FluxFrame, DatasetError> {
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| DatasetError::Io(format!("{}: {e}", path.display())))?;
    parse_csv(&text, columns, opts)
}

/// Parses CSV text; see [`load_csv`].
pub fn parse_csv(text: &str, columns: &[&str], opts: &LoadOptions) -> Result<FluxFrame, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| DatasetError::Csv(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let find = |name: &str| header.iter().position(|h| h == name);

    let time_idx = TIME_COLUMNS
        .iter()
        .find_map(|c| find(c))
        .ok_or_else(|| DatasetError::MissingColumn(TIME_COLUMNS[0].to_string()))?;

    let wanted: Vec<String> = if columns.is_empty() {
        header
            .iter()
            .enumerate()
            .filter(|(i, h)| *i != time_idx && !h.ends_with("_QC") && !TIME_COLUMNS.contains(&h.as_str()))
            .map(|(_, h)| h.clone())
            .collect()
    } else {
        columns.iter().map(|s| s.to_string()).collect()
    };
    let mut idx = Vec::with_capacity(wanted.len());
    for c in &wanted {
        let i = find(c).ok_or_else(|| DatasetError::MissingColumn(c.clone()))?;
        idx.push((i, find(&format!("{c}_QC"))));
    }

    let mut stamps = Vec::new();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); wanted.len()];
    let mut masks: Vec<Vec<bool>> = vec![Vec::new(); wanted.len()];
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| DatasetError::Csv(format!("row {row}: {e}")))?;
        let ts_cell = rec.get(time_idx).unwrap_or("");
        let ts: i64 = ts_cell.trim().parse().map_err(|_| DatasetError::Parse {
            row,
            column: header[time_idx].clone(),
            cell: ts_cell.to_string(),
        })?;
        stamps.push(Timestamp(ts));
        for (k, &(ci, qi)) in idx.iter().enumerate() {
            let cell = rec.get(ci).unwrap_or("");
            let v = if is_missing(cell) {
                f64::NAN
            } else {
                let v: f64 = cell.trim().parse().map_err(|_| DatasetError::Parse {
                    row,
                    column: wanted[k].clone(),
                    cell: cell.to_string(),
                })?;
                if v == MISSING_SENTINEL {
                    f64::NAN
                } else {
                    v
                }
            };
            let qc_ok = match qi {
                None => true,
                Some(q) => {
                    let cell = rec.get(q).unwrap_or("");
                    match cell.trim().parse::<f64>() {
                        Ok(qv) if qv != MISSING_SENTINEL => qv <= opts.max_qc,
                        _ => false,
                    }
                }
            };
            values[k].push(v);
            masks[k].push(qc_ok && v.is_finite());
        }
    }

    let mut frame = FluxFrame::new(stamps)?;
    for ((name, v), m) in wanted.iter().zip(values).zip(masks) {
        frame = frame.with_column_masked(name, v, m)?;
    }
    Ok(frame)
}

/// Writes the frame as CSV: a `TIMESTAMP` column, every data column, and a
/// `<col>_QC` companion (0 = measured, 1 = not) for columns with any
/// unmeasured row. Missing values are written as `-9999`.
pub fn write_csv(frame: &FluxFrame, path: &Path) -> Result<(), DatasetError> {
    let mut out = Vec::new();
    write_csv_to(frame, &mut out)?;
    File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|e| DatasetError::Io(format!("{}: {e}", path.display())))
}

pub fn write_csv_to<W: Write>(frame: &FluxFrame, sink: W) -> Result<(), DatasetError> {
    let mut w = csv::Writer::from_writer(sink);
    let names: Vec<&str> = frame.column_names().collect();
    let with_qc: Vec<bool> = names
        .iter()
        .map(|n| frame.quality(n).map(|q| q.iter().any(|&m| !m)).unwrap_or(false))
        .collect();
    let mut header = vec![TIME_COLUMNS[0].to_string()];
    for (n, &q) in names.iter().zip(&with_qc) {
        header.push(n.to_string());
        if q {
            header.push(format!("{n}_QC"));
        }
    }
    let csv_err = |e: csv::Error| DatasetError::Csv(e.to_string());
    w.write_record(&header).map_err(csv_err)?;
    let cols: Vec<&[f64]> = names.iter().map(|n| frame.column(n).unwrap()).collect();
    let quals: Vec<&[bool]> = names.iter().map(|n| frame.quality(n).unwrap()).collect();
    for i in 0..frame.len() {
        let mut rec = Vec::with_capacity(header.len());
        rec.push(frame.timestamps()[i].0.to_string());
        for k in 0..names.len() {
            let v = cols[k][i];
            rec.push(if v.is_finite() { format!("{v}") } else { "-9999".to_string() });
            if with_qc[k] {
                rec.push(if quals[k][i] { "0" } else { "1" }.to_string());
            }
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| DatasetError::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_rows() {
        let text = "TIMESTAMP,TA,NEE\n200301010000,1.5,2\n200301010030,1.0,3\n200301010100,0.5,4\n";
        let f = parse_csv(text, &["TA", "NEE"], &LoadOptions::default()).unwrap();
        assert_eq!(f.len(), 3);
        assert_eq!(f.column("NEE").unwrap(), &[2.0, 3.0, 4.0]);
    }

    #[test]
    fn sentinel_is_missing() {
        let text = "TIMESTAMP,TA,NEE\n200301010000,1.5,-9999\n200301010030,1.0,3\n";
        let f = parse_csv(text, &["TA", "NEE"], &LoadOptions::default()).unwrap();
        assert!(f.column("NEE").unwrap()[0].is_nan());
        assert_eq!(f.quality("NEE").unwrap(), &[false, true]);
        assert_eq!(f.quality("TA").unwrap(), &[true, true]);
    }

    #[test]
    fn qc_companion_mask() {
        let text = "TIMESTAMP,NEE,NEE_QC\n200301010000,1,0\n200301010030,2,2\n200301010100,3,1\n";
        let f = parse_csv(text, &["NEE"], &LoadOptions::default()).unwrap();
        assert_eq!(f.quality("NEE").unwrap(), &[true, false, false]);
        let f = parse_csv(text, &["NEE"], &LoadOptions { max_qc: 1.0 }).unwrap();
        assert_eq!(f.quality("NEE").unwrap(), &[true, false, true]);
    }

    #[test]
    fn missing_declared_column() {
        let text = "TIMESTAMP,TA,NEE\n200301010000,1.5,2\n";
        match parse_csv(text, &["TA", "VPD"], &LoadOptions::default()) {
            Err(DatasetError::MissingColumn(c)) => assert_eq!(c, "VPD"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_cell_reports_row() {
        let text = "TIMESTAMP,TA\n200301010000,1.5\n200301010030,abc\n";
        match parse_csv(text, &["TA"], &LoadOptions::default()) {
            Err(DatasetError::Parse { row, column, .. }) => {
                assert_eq!(row, 1);
                assert_eq!(column, "TA");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_monotone_rejected() {
        let text = "TIMESTAMP,TA\n200301010030,1.5\n200301010000,1\n";
        assert!(matches!(
            parse_csv(text, &["TA"], &LoadOptions::default()),
            Err(DatasetError::NonMonotoneTimestamps { .. })
        ));
    }
}
