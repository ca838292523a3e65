#![allow(dead_code)]

use chm_core::dataset::{FluxFrame, Timestamp};
use chrono::{Duration, NaiveDate};

/// Half-hourly frame starting 2004-01-01 holding the given columns.
pub fn frame(cols: &[(&str, Vec<f64>)]) -> FluxFrame {
    let n = cols[0].1.len();
    let t0 = NaiveDate::from_ymd_opt(2004, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
    let ts = (0..n).map(|k| Timestamp::from_datetime(t0 + Duration::minutes(30 * k as i64))).collect();
    let mut f = FluxFrame::new(ts).unwrap();
    for (name, v) in cols {
        f = f.with_column(name, v.clone()).unwrap();
    }
    f
}

/// Solves the square system `a x = b` by Gauss-Jordan elimination with
/// partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let k = b.len();
    for c in 0..k {
        let piv = (c..k).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, piv);
        b.swap(c, piv);
        for r in 0..k {
            if r != c {
                let f = a[r][c] / a[c][c];
                for cc in c..k {
                    a[r][cc] -= f * a[c][cc];
                }
                b[r] -= f * b[c];
            }
        }
    }
    (0..k).map(|i| b[i] / a[i][i]).collect()
}

/// OLS with intercept through the normal equations; returns `[b0, b1, ...]`.
pub fn ols(rows: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let k = rows[0].len() + 1;
    let mut a = vec![vec![0.0; k]; k];
    let mut b = vec![0.0; k];
    for (r, &yi) in rows.iter().zip(y) {
        let z: Vec<f64> = std::iter::once(1.0).chain(r.iter().copied()).collect();
        for i in 0..k {
            for j in 0..k {
                a[i][j] += z[i] * z[j];
            }
            b[i] += z[i] * yi;
        }
    }
    solve(a, b)
}

pub fn ols_predict(beta: &[f64], row: &[f64]) -> f64 {
    beta[0] + beta[1..].iter().zip(row).map(|(b, x)| b * x).sum::<f64>()
}

/// Linear-Gaussian partially linear DGP: returns (w1, w2, t, y).
pub fn linear_dgp(n: usize, theta: f64, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    use rand::Rng;
    use rand_distr::StandardNormal;
    let mut r = chm_core::seed::rng(seed);
    let mut z = || -> f64 { r.sample(StandardNormal) };
    let (mut w1, mut w2, mut t, mut y) = (vec![], vec![], vec![], vec![]);
    for _ in 0..n {
        let a = z();
        let b = z();
        let tt = 0.5 * a - 0.3 * b + z();
        let yy = theta * tt + 1.0 * a + 0.5 * b + z();
        w1.push(a);
        w2.push(b);
        t.push(tt);
        y.push(yy);
    }
    (w1, w2, t, y)
}

/// Partialled-out OLS computed fold by fold with the normal equations.
pub fn robinson_oracle(w: &[Vec<f64>], t: &[f64], y: &[f64], folds: &[usize], k: usize) -> f64 {
    let n = y.len();
    let (mut num, mut den) = (0.0, 0.0);
    for fold in 0..k {
        let train: Vec<usize> = (0..n).filter(|&i| folds[i] != fold).collect();
        let rows: Vec<Vec<f64>> = train.iter().map(|&i| w[i].clone()).collect();
        let by = ols(&rows, &train.iter().map(|&i| y[i]).collect::<Vec<_>>());
        let bt = ols(&rows, &train.iter().map(|&i| t[i]).collect::<Vec<_>>());
        for i in (0..n).filter(|&i| folds[i] == fold) {
            let yr = y[i] - ols_predict(&by, &w[i]);
            let tr = t[i] - ols_predict(&bt, &w[i]);
            num += tr * yr;
            den += tr * tr;
        }
    }
    num / den
}
