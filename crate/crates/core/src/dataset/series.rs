use super::DatasetError;

/// Centered moving mean over `window_days * samples_per_day` samples.
///
/// At the series ends the window is truncated to the available samples, so
/// the output has the input's length and never invents data. Non-finite
/// samples are skipped; a window with no finite samples yields `NaN`.
pub fn moving_average_smooth(
    series: &[f64],
    window_days: f64,
    samples_per_day: f64,
) -> Result<Vec<f64>, DatasetError> {
    if series.is_empty() {
        return Err(DatasetError::EmptySeries);
    }
    let width = (window_days * samples_per_day).round();
    if !(width >= 1.0) {
        return Err(DatasetError::InvalidWindow(window_days * samples_per_day));
    }
    let half = (width as usize) / 2;
    let n = series.len();
    Ok((0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            let (s, c) = series[lo..hi]
                .iter()
                .filter(|v| v.is_finite())
                .fold((0.0, 0usize), |(s, c), &v| (s + v, c + 1));
            if c == 0 {
                f64::NAN
            } else {
                s / c as f64
            }
        })
        .collect())
}

/// Central difference quotient per sample, one-sided at the endpoints.
pub fn central_difference(series: &[f64]) -> Result<Vec<f64>, DatasetError> {
    let n = series.len();
    if n < 2 {
        return Err(DatasetError::SeriesTooShort { needed: 2, found: n });
    }
    let mut d = Vec::with_capacity(n);
    d.push(series[1] - series[0]);
    for i in 1..n - 1 {
        d.push((series[i + 1] - series[i - 1]) / 2.0);
    }
    d.push(series[n - 1] - series[n - 2]);
    Ok(d)
}
