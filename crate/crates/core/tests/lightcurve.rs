use chm_core::dataset::{FluxFrame, Timestamp};
use chm_core::lightcurve::*;
use chm_core::synthgen::{bundled_drivers, gen_lue, DriverConfig, LueGenConfig};
use chrono::NaiveDate;
use proptest::prelude::*;

fn grid(n: usize, max: f64) -> Vec<f64> {
    // a few night points plus an even daytime ramp
    (0..n).map(|i| if i < 5 { 0.0 } else { max * (i - 4) as f64 / (n - 5) as f64 }).collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}

#[test]
fn recovers_noise_free_parameters() {
    let truth = HyperbolaParams::new(0.05, 20.0, 2.0);
    let sw = grid(200, 1000.0);
    let nee: Vec<f64> = sw.iter().map(|&s| truth.nee(s)).collect();
    let fit = fit_hyperbola(&sw, &nee, &HyperbolaParams::initial_guess(&sw, &nee)).unwrap();
    assert!(fit.converged);
    assert!(rel(fit.alpha, 0.05) < 1e-4, "{fit:?}");
    assert!(rel(fit.beta, 20.0) < 1e-4, "{fit:?}");
    assert!(rel(fit.gamma, 2.0) < 1e-4, "{fit:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn recovers_random_parameters(alpha in 0.005f64..0.2, beta in 5.0f64..50.0, gamma in -2.0f64..6.0) {
        let truth = HyperbolaParams::new(alpha, beta, gamma);
        let sw = grid(150, 1200.0);
        let nee: Vec<f64> = sw.iter().map(|&s| truth.nee(s)).collect();
        let fit = fit_hyperbola(&sw, &nee, &HyperbolaParams::initial_guess(&sw, &nee)).unwrap();
        prop_assert!(rel(fit.alpha, alpha) < 1e-4 && rel(fit.beta, beta) < 1e-4, "{:?}", fit);
        prop_assert!((fit.gamma - gamma).abs() < 1e-4 * gamma.abs().max(1.0));
    }

    #[test]
    fn fitted_sse_never_exceeds_initial(seed in 0u64..1000) {
        let mut r = chm_core::seed::rng(seed);
        let sw = grid(80, 900.0);
        let nee: Vec<f64> = sw.iter().map(|&s| {
            let e: f64 = rand::Rng::gen_range(&mut r, -1.0..1.0);
            HyperbolaParams::new(0.03, 15.0, 1.0).nee(s) + e
        }).collect();
        let init = HyperbolaParams::initial_guess(&sw, &nee);
        let sse0: f64 = sw.iter().zip(&nee).map(|(&s, &y)| (y - init.nee(s)).powi(2)).sum();
        let fit = fit_hyperbola(&sw, &nee, &init).unwrap();
        prop_assert!(fit.sse <= sse0);
        let recomputed: f64 = sw.iter().zip(&nee).map(|(&s, &y)| (y - fit.nee(s)).powi(2)).sum();
        prop_assert!(rel(recomputed, fit.sse) < 1e-9);
    }
}

#[test]
fn flat_response_drives_uptake_to_zero() {
    let sw = grid(100, 800.0);
    let nee = vec![3.5; sw.len()];
    let fit = fit_hyperbola(&sw, &nee, &HyperbolaParams::initial_guess(&sw, &nee)).unwrap();
    assert!((fit.gamma - 3.5).abs() < 1e-6, "{fit:?}");
    assert!(fit.uptake(800.0) < 1e-6, "{fit:?}");
    assert!(!fit.converged, "boundary solution must be reported as not converged");
}

#[test]
fn radiation_rescaling_leaves_optimum_unchanged() {
    let mut r = chm_core::seed::rng(7);
    let sw = grid(120, 1000.0);
    let nee: Vec<f64> = sw
        .iter()
        .map(|&s| HyperbolaParams::new(0.04, 25.0, 2.5).nee(s) + rand::Rng::gen_range(&mut r, -0.8..0.8))
        .collect();
    let init = HyperbolaParams::new(0.02, 30.0, 2.0);
    let a = fit_hyperbola(&sw, &nee, &init).unwrap();
    let sw10: Vec<f64> = sw.iter().map(|s| s * 10.0).collect();
    let b = fit_hyperbola(&sw10, &nee, &HyperbolaParams::new(init.alpha / 10.0, init.beta, init.gamma)).unwrap();
    assert!(rel(a.sse, b.sse) < 1e-8, "{} vs {}", a.sse, b.sse);
    assert!(rel(a.alpha, b.alpha * 10.0) < 1e-5);
}

#[test]
fn rejects_bad_inputs() {
    let sw = grid(50, 100.0);
    assert!(matches!(
        fit_hyperbola(&sw, &sw[1..], &HyperbolaParams::new(0.1, 1.0, 0.0)),
        Err(LightCurveError::LengthMismatch { .. })
    ));
    assert!(matches!(
        fit_hyperbola(&sw, &sw, &HyperbolaParams::new(-0.1, 1.0, 0.0)),
        Err(LightCurveError::InvalidInit(_))
    ));
}

fn lue_frame(years: u32) -> FluxFrame {
    let drivers = bundled_drivers(&DriverConfig { n_years: years, ..Default::default() }).unwrap();
    gen_lue(&drivers, &LueGenConfig { sigma: 0.0, seed: 3 }).unwrap()
}

fn corr(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn transform_tracks_true_uptake_per_year() {
    let frame = lue_frame(2);
    let out = transform_sw(&frame, "SW_IN", "NEE_syn", WindowGeometry::default()).unwrap();
    let gpp = frame.column("GPP_syn").unwrap();
    for year in [2003, 2004] {
        let rows: Vec<usize> = (0..frame.len()).filter(|&i| frame.timestamps()[i].year() == year).collect();
        let f: Vec<f64> = rows.iter().map(|&i| out.values[i]).collect();
        let g: Vec<f64> = rows.iter().map(|&i| gpp[i]).collect();
        let c = corr(&f, &g);
        assert!(c >= 0.95, "year {year}: corr {c}");
    }
}

#[test]
fn transform_is_zero_at_night_bounded_and_monotone_per_window() {
    let frame = lue_frame(1);
    let out = transform_sw(&frame, "SW_IN", "NEE_syn", WindowGeometry::default()).unwrap();
    let sw = frame.column("SW_IN").unwrap();
    for (i, (&s, &f)) in sw.iter().zip(&out.values).enumerate() {
        let WindowStatus::Fitted(p) = &out.windows[out.row_window[i]].status else { panic!("unfitted donor") };
        if s <= 0.0 {
            assert_eq!(f, 0.0);
        }
        assert!(f >= 0.0 && f < p.beta);
    }
    for w in &out.windows {
        let WindowStatus::Fitted(p) = &w.status else { continue };
        let mut prev = p.uptake(0.0);
        assert_eq!(prev, 0.0);
        for k in 1..=200 {
            let v = p.uptake(k as f64 * 10.0);
            assert!(v >= prev);
            prev = v;
        }
    }
    // windows tile the series in 5-day steps and cover the boundary days
    assert_eq!(out.windows[0].start_day, 0);
    assert!(out.windows.windows(2).all(|w| w[1].start_day == w[0].start_day + 5));
    assert_eq!(out.row_window[0], 0);
    assert_eq!(*out.row_window.last().unwrap(), out.windows.len() - 1);
}

#[test]
fn dark_windows_inherit_nearest_fit() {
    let frame = lue_frame(1);
    let spd = 48;
    // darken days 30..60 so the windows centred there cannot be fitted
    let sw: Vec<f64> = frame
        .column("SW_IN")
        .unwrap()
        .iter()
        .enumerate()
        .map(|(i, &s)| if (30 * spd..60 * spd).contains(&i) { 0.0 } else { s })
        .collect();
    let frame = frame.with_column("SW_DARK", sw).unwrap();
    let out = transform_sw(&frame, "SW_DARK", "NEE_syn", WindowGeometry::default()).unwrap();
    let skipped: Vec<usize> = out
        .windows
        .iter()
        .enumerate()
        .filter(|(_, w)| matches!(w.status, WindowStatus::Skipped { .. }))
        .map(|(k, _)| k)
        .collect();
    assert!(!skipped.is_empty());
    for (i, &k) in out.row_window.iter().enumerate() {
        assert!(matches!(out.windows[k].status, WindowStatus::Fitted(_)), "row {i}");
    }
    let mut buf = Vec::new();
    write_windows_csv(&mut buf, &out.windows).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("start_day,end_day,alpha,beta,gamma,sse,converged,status\n"));
    assert!(text.contains("skipped ("));
    assert_eq!(text.lines().count(), out.windows.len() + 1);
}

#[test]
fn transform_errors() {
    let start = NaiveDate::from_ymd_opt(2003, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
    let ts: Vec<Timestamp> =
        (0..48 * 10).map(|i| Timestamp::from_datetime(start + chrono::Duration::minutes(30 * i))).collect();
    let n = ts.len();
    let short = FluxFrame::new(ts).unwrap().with_column("SW", vec![100.0; n]).unwrap().with_column("NEE", vec![1.0; n]).unwrap();
    assert_eq!(
        transform_sw(&short, "SW", "NEE", WindowGeometry::default()).unwrap_err(),
        LightCurveError::SpanTooShort { days: 10, needed: 15 }
    );
    let frame = lue_frame(1);
    let dark = frame.with_column("DARK", vec![0.0; frame.len()]).unwrap();
    assert_eq!(
        transform_sw(&dark, "DARK", "NEE_syn", WindowGeometry::default()).unwrap_err(),
        LightCurveError::NoSuccessfulWindow
    );
    assert!(matches!(
        transform_sw(&frame, "SW_IN", "NEE_syn", WindowGeometry { window_days: 15, center_days: 4 }),
        Err(LightCurveError::InvalidWindow(_))
    ));
    assert!(matches!(transform_sw(&frame, "NOPE", "NEE_syn", WindowGeometry::default()), Err(LightCurveError::Dataset(_))));
}
