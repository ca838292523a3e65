use chm_core::learners::{
    fit, mlp_gradient, mlp_loss_and_gradient, sample_mask, DecisionTree, GbtConfig, LearnerSpec, MlpConfig,
    NetworkLayout, OutputActivation, RfConfig, SortedColumns, TreeConfig,
    ValidationSplit,
};
use chm_core::seed::rng;
use ndarray::Array2;
use rand::Rng;

fn sine_data(n: usize) -> (Array2<f64>, Vec<f64>) {
    let x = Array2::from_shape_fn((n, 1), |(i, _)| -3.0 + 6.0 * i as f64 / (n - 1) as f64);
    let y = x.column(0).iter().map(|v| v.sin()).collect();
    (x, y)
}

fn friedman(n: usize, seed: u64) -> (Array2<f64>, Vec<f64>) {
    let mut r = rng(seed);
    let x = Array2::from_shape_fn((n, 3), |_| r.gen_range(0.0..1.0));
    let y = x
        .outer_iter()
        .map(|row| 10.0 * (3.0_f64 * row[0]).sin() + 5.0 * row[1] * row[1] - 2.0 * row[2] + r.gen_range(-0.1..0.1))
        .collect();
    (x, y)
}

fn rmse(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

#[test]
fn mlp_fits_sine() {
    let (x, y) = sine_data(512);
    // x is sorted, so a tail split would hold out an extrapolation region
    let cfg = MlpConfig { validation_split: ValidationSplit::Random, ..Default::default() };
    let m = fit(&LearnerSpec::mlp(cfg).with_seed(7), x.view(), &y, None).unwrap();
    let e = m.diagnostics().train_loss.sqrt();
    assert!(e <= 0.05, "train rmse {e}");
    let all = rmse(&m.predict(x.view()).unwrap(), &y);
    assert!(all <= 0.05, "rmse over all rows {all}");
}

fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    diff / scale.max(1e-300)
}

#[test]
fn mlp_gradient_matches_finite_differences() {
    let mut r = rng(42);
    for case in 0..20 {
        let p = r.gen_range(1..4);
        let depth = r.gen_range(1..3);
        let hidden: Vec<usize> = (0..depth).map(|_| r.gen_range(2..6)).collect();
        let n = r.gen_range(3..9);
        let layout = NetworkLayout::new(p, &hidden);
        let params = layout.init_params(&mut r);
        let x: Vec<f64> = (0..n * p).map(|_| r.gen_range(-2.0..2.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| r.gen_range(0.1..2.0)).collect();
        let cfg = MlpConfig {
            hidden_layers: hidden,
            output: if case % 2 == 0 { OutputActivation::Identity } else { OutputActivation::Softplus },
            dropout_rate: if case % 3 == 0 { 0.2 } else { 0.0 },
            weight_decay: if case % 4 < 2 { 0.1 } else { 0.0 },
            ..Default::default()
        };
        let mask = (cfg.dropout_rate > 0.0).then(|| {
            let mut m = vec![0.0; n * layout.n_hidden_units()];
            sample_mask(&mut r, cfg.dropout_rate, &mut m);
            m
        });
        let g = mlp_gradient(&layout, &params, &x, &y, &cfg, mask.as_deref());
        let loss = |q: &[f64]| {
            mlp_loss_and_gradient(&layout, q, &x, &y, None, cfg.output, cfg.weight_decay, mask.as_deref()).0
        };
        let h = 1e-5;
        let fd: Vec<f64> = (0..params.len())
            .map(|k| {
                let mut a = params.clone();
                let mut b = params.clone();
                a[k] += h;
                b[k] -= h;
                (loss(&a) - loss(&b)) / (2.0 * h)
            })
            .collect();
        let e = relative_error(&g, &fd);
        assert!(e <= 1e-4, "case {case}: relative error {e}");
    }
}

#[test]
fn softplus_output_is_positive() {
    let (x, y) = sine_data(64);
    let y: Vec<f64> = y.iter().map(|v| v + 1.5).collect();
    let cfg = MlpConfig { output: OutputActivation::Softplus, iterations: 200, ..Default::default() };
    let m = fit(&LearnerSpec::mlp(cfg), x.view(), &y, None).unwrap();
    let far = Array2::from_shape_fn((50, 1), |(i, _)| -100.0 + 4.0 * i as f64);
    assert!(m.predict(far.view()).unwrap().iter().all(|&v| v > 0.0));
}

#[test]
fn gbt_loss_non_increasing() {
    let (x, y) = friedman(300, 1);
    let m = fit(&LearnerSpec::gbt(GbtConfig::default()), x.view(), &y, None).unwrap();
    let h = &m.diagnostics().stage_losses;
    assert_eq!(h.len(), 100);
    for w in h.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
    }
}

#[test]
fn gbt_equal_weights_match_unweighted() {
    let (x, y) = friedman(200, 2);
    let spec = LearnerSpec::gbt(GbtConfig { n_stages: 30, subsample: 0.7, ..Default::default() }).with_seed(5);
    let a = fit(&spec, x.view(), &y, None).unwrap();
    let b = fit(&spec, x.view(), &y, Some(&vec![3.7; 200])).unwrap();
    assert_eq!(a.predict(x.view()).unwrap(), b.predict(x.view()).unwrap());
}

#[test]
fn single_tree_forest_equals_tree() {
    let (x, y) = friedman(150, 3);
    let cfg = RfConfig { n_trees: 1, bootstrap: false, feature_subsample: 1.0, ..Default::default() };
    let forest = fit(&LearnerSpec::rf(cfg), x.view(), &y, None).unwrap();
    let cols: Vec<Vec<f64>> = x.columns().into_iter().map(|c| c.to_vec()).collect();
    let tree = DecisionTree::fit(&SortedColumns::new(cols), &y, &vec![1.0; 150], &TreeConfig::default(), &mut rng(0));
    let fp = forest.predict(x.view()).unwrap();
    for (i, row) in x.outer_iter().enumerate() {
        assert_eq!(fp[i], tree.predict_row(row.as_slice().unwrap()));
    }
}

#[test]
fn deterministic_and_pure() {
    let (x, y) = friedman(120, 4);
    let specs = [
        LearnerSpec::linear(),
        LearnerSpec::gbt(GbtConfig { subsample: 0.5, ..Default::default() }).with_seed(9),
        LearnerSpec::rf(RfConfig { n_trees: 20, feature_subsample: 0.5, ..Default::default() }).with_seed(9),
        LearnerSpec::mlp(MlpConfig { iterations: 100, dropout_rate: 0.2, batch_size: Some(32), ..Default::default() })
            .with_seed(9),
    ];
    for spec in &specs {
        let a = fit(spec, x.view(), &y, None).unwrap();
        let b = fit(spec, x.view(), &y, None).unwrap();
        let pa = a.predict(x.view()).unwrap();
        assert_eq!(pa, b.predict(x.view()).unwrap(), "{}", spec.name());
        assert_eq!(pa, a.predict(x.view()).unwrap(), "{}", spec.name());
        assert!(pa.iter().all(|v| v.is_finite()));
    }
}

#[test]
fn constant_target_predicts_constant() {
    let (x, _) = friedman(60, 5);
    let y = vec![2.25; 60];
    let specs = [
        LearnerSpec::linear(),
        LearnerSpec::gbt(GbtConfig::default()),
        LearnerSpec::rf(RfConfig { n_trees: 5, ..Default::default() }),
        LearnerSpec::mlp(MlpConfig { iterations: 10, ..Default::default() }),
    ];
    for spec in &specs {
        let m = fit(spec, x.view(), &y, None).unwrap();
        assert!(m.diagnostics().constant_target);
        for p in m.predict(x.view()).unwrap() {
            assert!((p - 2.25).abs() <= 1e-6);
        }
    }
}

#[test]
fn linear_matches_weighted_normal_equations() {
    let (x, y) = friedman(80, 6);
    let mut r = rng(11);
    let w: Vec<f64> = (0..80).map(|_| r.gen_range(0.1..3.0)).collect();
    let m = fit(&LearnerSpec::linear(), x.view(), &y, Some(&w)).unwrap();
    // normal equations (Z'WZ) b = Z'Wy with Z = [1, x], solved by Gaussian elimination
    let k = 4;
    let mut a = vec![vec![0.0; k + 1]; k];
    for i in 0..80 {
        let z = [1.0, x[[i, 0]], x[[i, 1]], x[[i, 2]]];
        for r_ in 0..k {
            for c in 0..k {
                a[r_][c] += w[i] * z[r_] * z[c];
            }
            a[r_][k] += w[i] * z[r_] * y[i];
        }
    }
    for c in 0..k {
        let piv = (c..k).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, piv);
        for r_ in 0..k {
            if r_ != c {
                let f = a[r_][c] / a[c][c];
                for cc in c..=k {
                    a[r_][cc] -= f * a[c][cc];
                }
            }
        }
    }
    let b: Vec<f64> = (0..k).map(|i| a[i][k] / a[i][i]).collect();
    let p = m.predict(x.view()).unwrap();
    for (i, row) in x.outer_iter().enumerate() {
        let expect = b[0] + b[1] * row[0] + b[2] * row[1] + b[3] * row[2];
        assert!((p[i] - expect).abs() < 1e-8);
    }
}

#[test]
fn gbt_early_stopping_adapts_to_signal() {
    let (x, y) = friedman(600, 11);
    let mut r = rng(12);
    let noise: Vec<f64> = (0..600).map(|_| r.gen_range(-1.0..1.0)).collect();
    let spec = |stages| {
        LearnerSpec::gbt(GbtConfig { n_stages: stages, validation_fraction: 0.25, n_iter_no_change: 15, ..Default::default() })
            .with_seed(4)
    };
    let signal = fit(&spec(400), x.view(), &y, None).unwrap();
    let pure = fit(&spec(400), x.view(), &noise, None).unwrap();
    let (ks, kn) = (signal.diagnostics().best_iteration.unwrap(), pure.diagnostics().best_iteration.unwrap());
    assert!(ks > 100, "signal stopped at {ks}");
    assert!(kn < 20, "noise stopped at {kn}");
    assert_eq!(signal.diagnostics().stage_losses.len(), ks);
}

#[test]
fn gbt_early_stopping_keeps_the_best_prefix() {
    let (x, y) = friedman(300, 13);
    let cfg = |stages, patience| GbtConfig { n_stages: stages, validation_fraction: 0.3, n_iter_no_change: patience, ..Default::default() };
    let full = fit(&LearnerSpec::gbt(cfg(200, 200)).with_seed(8), x.view(), &y, None).unwrap();
    let k = full.diagnostics().best_iteration.unwrap();
    assert!(k >= 1);
    // a run capped at the chosen stage count rebuilds the same ensemble
    let capped = fit(&LearnerSpec::gbt(cfg(k, 200)).with_seed(8), x.view(), &y, None).unwrap();
    assert_eq!(full.predict(x.view()).unwrap(), capped.predict(x.view()).unwrap());
}

#[test]
fn gbt_config_without_stopping_fields_deserializes() {
    let json = r#"{"n_stages":10,"learning_rate":0.1,"max_depth":3,"min_samples_leaf":1,"subsample":1.0}"#;
    let cfg: GbtConfig = serde_json::from_str(json).unwrap();
    assert_eq!(cfg, GbtConfig { n_stages: 10, ..Default::default() });
}
