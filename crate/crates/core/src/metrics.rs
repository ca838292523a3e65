//! Agreement scores between a series and its reference, and summary
//! statistics over replicated estimates.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} values, got {found}")]
    TooShort { needed: usize, found: usize },
    #[error("empty group {0}")]
    EmptyGroup(String),
    #[error("io: {0}")]
    Io(String),
}

/// R², RMSE and bias of `x` against the reference `y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreTriple {
    /// `None` when the reference has zero variance.
    pub r2: Option<f64>,
    pub rmse: f64,
    /// `mean(x) − mean(y)`.
    pub bias: f64,
}

/// Scores `x` against reference `y`: `r2 = 1 − Σ(x−y)²/Σ(y−ȳ)²`.
pub fn score(x: &[f64], y: &[f64]) -> Result<ScoreTriple, MetricsError> {
    if x.len() != y.len() {
        return Err(MetricsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(MetricsError::TooShort { needed: 2, found: x.len() });
    }
    let n = x.len() as f64;
    let my = y.iter().sum::<f64>() / n;
    let mx = x.iter().sum::<f64>() / n;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
    let sst: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    Ok(ScoreTriple {
        r2: (sst > 0.0).then(|| 1.0 - sse / sst),
        rmse: (sse / n).sqrt(),
        bias: mx - my,
    })
}

/// Quantile by linear interpolation between order statistics
/// (`h = (m − 1)·p`).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Statistics of one group of replicated estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation (`m − 1` denominator); `NaN` for one value.
    pub sd: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    /// `mean ± 1.96·sd/√m`.
    pub ci_lo: f64,
    pub ci_hi: f64,
}

pub fn summarize_values(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
    } else {
        f64::NAN
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let half = 1.96 * sd / m.sqrt();
    Some(Summary {
        count: values.len(),
        mean,
        sd,
        median: quantile(&sorted, 0.5),
        q25: quantile(&sorted, 0.25),
        q75: quantile(&sorted, 0.75),
        ci_lo: mean - half,
        ci_hi: mean + half,
    })
}

/// One summary row per distinct key, in key order.
pub fn summarize<K: Ord + Clone>(records: &[(K, f64)]) -> Vec<(K, Summary)> {
    let mut groups: BTreeMap<K, Vec<f64>> = BTreeMap::new();
    for (k, v) in records {
        groups.entry(k.clone()).or_default().push(*v);
    }
    groups
        .into_iter()
        .map(|(k, v)| {
            let s = summarize_values(&v).expect("groups are non-empty by construction");
            (k, s)
        })
        .collect()
}

/// Column names written after the key columns by [`write_summary_csv`].
pub const SUMMARY_COLUMNS: [&str; 8] = ["count", "mean", "sd", "median", "q25", "q75", "ci_lo", "ci_hi"];

/// Writes `key columns..., count, mean, sd, median, q25, q75, ci_lo, ci_hi`.
pub fn write_summary_csv<W: Write>(
    out: W,
    key_names: &[&str],
    rows: &[(Vec<String>, Summary)],
) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| MetricsError::Io(e.to_string());
    w.write_record(key_names.iter().copied().chain(SUMMARY_COLUMNS)).map_err(io)?;
    for (keys, s) in rows {
        let mut rec = keys.clone();
        rec.push(s.count.to_string());
        for v in [s.mean, s.sd, s.median, s.q25, s.q75, s.ci_lo, s.ci_hi] {
            rec.push(format_number(v));
        }
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| MetricsError::Io(e.to_string()))
}

/// Shortest round-tripping decimal, or `NA` for non-finite values.
pub fn format_number(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        "NA".to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_series() {
        let s = score(&[1.0, 2.0, 4.0], &[1.0, 2.0, 4.0]).unwrap();
        assert_eq!(s, ScoreTriple { r2: Some(1.0), rmse: 0.0, bias: 0.0 });
    }

    #[test]
    fn mean_predictor() {
        let y = [1.0, 2.0, 6.0];
        let s = score(&[3.0; 3], &y).unwrap();
        assert_eq!(s.r2, Some(0.0));
        assert_eq!(s.bias, 0.0);
    }

    #[test]
    fn constant_reference() {
        let s = score(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap();
        assert_eq!(s.r2, None);
        assert!((s.rmse - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(s.bias, 0.0);
    }

    #[test]
    fn length_errors() {
        assert!(score(&[1.0], &[1.0]).is_err());
        assert!(score(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn r2_is_not_symmetric() {
        let a = [1.0, 2.0, 3.0, 5.0];
        let b = [1.5, 1.0, 3.5, 4.0];
        let ab = score(&a, &b).unwrap();
        let ba = score(&b, &a).unwrap();
        assert_ne!(ab.r2, ba.r2);
        assert!((ab.rmse - ba.rmse).abs() < 1e-15);
        assert!((ab.bias + ba.bias).abs() < 1e-15);
    }

    #[test]
    fn quartiles_by_interpolation() {
        let s = summarize_values(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!((s.median, s.q25, s.q75), (2.5, 1.75, 3.25));
    }

    #[test]
    fn identical_values() {
        let s = summarize_values(&[0.7; 5]).unwrap();
        assert_eq!((s.mean, s.median, s.sd), (0.7, 0.7, 0.0));
        assert_eq!(s.ci_lo, s.ci_hi);
    }

    #[test]
    fn grouping_preserves_keys() {
        let rows = summarize(&[("b", 1.0), ("a", 2.0), ("b", 3.0), ("a", 4.0)]);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].0, "a");
        assert_eq!(rows[0].1.mean, 3.0);
        assert_eq!(rows[1].1.mean, 2.0);
    }

    #[test]
    fn summary_csv_layout() {
        let s = summarize_values(&[1.0, 2.0]).unwrap();
        let mut buf = Vec::new();
        write_summary_csv(&mut buf, &["method", "n"], &[(vec!["dml-rf".into(), "250".into()], s)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("method,n,count,mean,sd,median,q25,q75,ci_lo,ci_hi"));
        assert!(lines.next().unwrap().starts_with("dml-rf,250,2,1.5,"));
    }

    proptest! {
        #[test]
        fn rmse_decomposes(v in proptest::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 2..50)) {
            let (x, y): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            let s = score(&x, &y).unwrap();
            let e: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
            let n = e.len() as f64;
            let me = e.iter().sum::<f64>() / n;
            let var = e.iter().map(|d| (d - me).powi(2)).sum::<f64>() / n;
            let scale = s.rmse.powi(2).max(1.0);
            prop_assert!((s.rmse.powi(2) - (s.bias.powi(2) + var)).abs() <= 1e-10 * scale);
        }

        #[test]
        fn quartiles_ordered(v in proptest::collection::vec(-1e3f64..1e3, 1..40)) {
            let s = summarize_values(&v).unwrap();
            prop_assert!(s.q25 <= s.median && s.median <= s.q75);
        }
    }
}
