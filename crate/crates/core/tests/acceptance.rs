//! Acceptance suite: one check per criterion, each printed as a PASS/FAIL
//! line. Run with `cargo test --test acceptance`; pass criterion ids (for
//! example `-- C1 C5`) to run a subset. Unmet criteria are reported but only
//! fail the process when `CHM_ACCEPTANCE_STRICT=1`; harness errors always do.

mod common;

use std::path::Path;
use std::time::Instant;

use chm_core::dataset::{RoleSpec, TreatmentTransform};
use chm_core::dml::{cross_fit, estimate_constant_effect, DmlConfig};
use chm_core::experiments::{
    run_lue_simulation, run_q10_simulation, ExperimentConfig, Method, Q10Sweep, Regularization, RunOptions,
};
use chm_core::learners::{
    mlp_gradient, mlp_loss_and_gradient, sample_mask, LearnerSpec, MlpConfig, NetworkLayout, OutputActivation,
};
use chm_core::lightcurve::{fit_hyperbola, transform_sw, HyperbolaParams, WindowGeometry, WindowStatus};
use chm_core::metrics::summarize_values;
use chm_core::seed::rng;
use chm_core::synthgen::{
    bundled_drivers, gen_lue, gen_q10, light_use_efficiency, truncated_normal, DriverConfig, LueGenConfig,
    Q10GenConfig,
};
use common::{frame, linear_dgp, robinson_oracle};
use rand::Rng;
use tempfile::tempdir;

/// Result of one criterion: sub-check lines and whether all held.
struct Report {
    pass: bool,
    lines: Vec<String>,
}

impl Report {
    fn new() -> Self {
        Self { pass: true, lines: Vec::new() }
    }

    fn check(&mut self, ok: bool, what: String) {
        self.pass &= ok;
        self.lines.push(format!("{} {what}", if ok { "ok  " } else { "MISS" }));
    }
}

fn opts() -> RunOptions {
    RunOptions { jobs: 0, resume: false }
}

fn q10_config(out: &Path, methods: &[Method], sizes: &[usize], reg: Regularization) -> ExperimentConfig {
    ExperimentConfig {
        methods: methods.to_vec(),
        sample_sizes: sizes.to_vec(),
        regularization: reg,
        output_dir: out.to_path_buf(),
        ..Default::default()
    }
}

fn mean_of(sweep: &Q10Sweep, m: Method, q: f64, n: usize) -> (f64, f64, usize) {
    let s = summarize_values(&sweep.estimates(m, q, n)).expect("no successful replications");
    (s.mean, s.sd, s.count)
}

fn c1() -> Report {
    let dir = tempdir().unwrap();
    let cfg = q10_config(dir.path(), &[Method::DmlRf, Method::DmlMlp], &[4000, 16000], Regularization::None);
    let sweep = run_q10_simulation(&cfg, &opts()).unwrap();
    let mut r = Report::new();
    r.check(sweep.failures == 0, format!("{} failed cells", sweep.failures));
    for m in [Method::DmlRf, Method::DmlMlp] {
        let (mean, _, k) = mean_of(&sweep, m, 1.5, 4000);
        r.check((1.45..=1.55).contains(&mean), format!("{} n=4000 mean {mean:.4} in [1.45, 1.55] ({k} reps)", m.name()));
        let (mean, sd, k) = mean_of(&sweep, m, 1.5, 16000);
        r.check(
            (1.45..=1.55).contains(&mean) && sd <= 0.05,
            format!("{} n=16000 mean {mean:.4} in [1.45, 1.55], sd {sd:.4} <= 0.05 ({k} reps)", m.name()),
        );
    }
    r
}

fn c2() -> Report {
    let mut r = Report::new();
    for reg in [Regularization::Dropout, Regularization::WeightDecay] {
        let dir = tempdir().unwrap();
        let cfg = q10_config(dir.path(), &[Method::DmlMlp, Method::Gdhm], &[1000], reg);
        let sweep = run_q10_simulation(&cfg, &opts()).unwrap();
        let (dml, _, _) = mean_of(&sweep, Method::DmlMlp, 1.5, 1000);
        let (gd, _, k) = mean_of(&sweep, Method::Gdhm, 1.5, 1000);
        r.check(
            (dml - 1.5).abs() < (gd - 1.5).abs() && gd > 1.5,
            format!(
                "{}: |dml-mlp {dml:.4} - 1.5| < |gdhm {gd:.4} - 1.5| and gdhm > 1.5 ({k} reps)",
                reg.name()
            ),
        );
    }
    r
}

fn c3() -> Report {
    let dir = tempdir().unwrap();
    let ladder = [250, 1000, 4000];
    let cfg = q10_config(dir.path(), &[Method::Gdhm, Method::GdhmTa], &ladder, Regularization::None);
    let sweep = run_q10_simulation(&cfg, &opts()).unwrap();
    let mut r = Report::new();
    let pooled: Vec<f64> = ladder.iter().flat_map(|&n| sweep.estimates(Method::GdhmTa, 1.5, n)).collect();
    let s = summarize_values(&pooled).unwrap();
    r.check(
        (1.9..=2.6).contains(&s.mean),
        format!("gdhm-ta pooled mean {:.4} in [1.9, 2.6] ({} fits)", s.mean, s.count),
    );
    for n in ladder {
        let (_, sd_ta, _) = mean_of(&sweep, Method::GdhmTa, 1.5, n);
        let (_, sd, _) = mean_of(&sweep, Method::Gdhm, 1.5, n);
        r.check(sd_ta > sd, format!("n={n}: sd gdhm-ta {sd_ta:.4} > sd gdhm {sd:.4}"));
    }
    r
}

fn c4() -> Report {
    let dir = tempdir().unwrap();
    let mut cfg = q10_config(dir.path(), &[Method::DmlRf], &[16000], Regularization::None);
    cfg.q10_values = vec![1.25, 1.75];
    let sweep = run_q10_simulation(&cfg, &opts()).unwrap();
    let mut r = Report::new();
    for q in [1.25, 1.75] {
        let half = 0.05 * q / 1.5;
        let (mean, _, k) = mean_of(&sweep, Method::DmlRf, q, 16000);
        r.check(
            (q - half..=q + half).contains(&mean),
            format!("Q10={q}: mean {mean:.4} in [{:.4}, {:.4}] ({k} reps)", q - half, q + half),
        );
    }
    r
}

fn c5() -> Report {
    let dir = tempdir().unwrap();
    let cfg = ExperimentConfig {
        sigma_grid: vec![0.0, 0.2, 1.0],
        replications: 10,
        output_dir: dir.path().to_path_buf(),
        ..Default::default()
    };
    let sweep = run_lue_simulation(&cfg, &opts()).unwrap();
    let mut r = Report::new();
    r.check(sweep.failures == 0, format!("{} failed cells", sweep.failures));
    // (flux, R² medians, R² tolerance, RMSE medians) per sigma
    let targets: [(&str, [f64; 3], f64, [f64; 3]); 3] = [
        ("GPP", [0.997, 0.996, 0.977], 0.03, [0.320, 0.401, 1.005]),
        ("RECO", [0.940, 0.936, 0.887], 0.05, [0.861, 0.921, 1.285]),
        ("NEE_clean", [0.978, 0.977, 0.964], 0.05, [0.872, 0.898, 1.147]),
    ];
    for (k, &sigma) in cfg.sigma_grid.iter().enumerate() {
        for (flux, r2, tol, rmse) in &targets {
            let m = sweep.summary_for(sigma, flux, "r2").map_or(f64::NAN, |s| s.median);
            r.check((m - r2[k]).abs() <= *tol, format!("sigma={sigma} {flux} median R2 {m:.3} within {tol} of {}", r2[k]));
            let m = sweep.summary_for(sigma, flux, "rmse").map_or(f64::NAN, |s| s.median);
            r.check(
                (m - rmse[k]).abs() <= 0.3 * rmse[k],
                format!("sigma={sigma} {flux} median RMSE {m:.3} within 30% of {}", rmse[k]),
            );
        }
    }
    r
}

fn linear_roles() -> RoleSpec {
    RoleSpec::new("Y", "T", &[], &["W1", "W2"], TreatmentTransform::Identity)
}

fn c6() -> Report {
    let (w1, w2, t, y) = linear_dgp(200, 0.7, 11);
    let f = frame(&[("W1", w1.clone()), ("W2", w2.clone()), ("T", t.clone()), ("Y", y.clone())]);
    let lin = LearnerSpec::linear();
    let mut r = Report::new();
    for k in [2, 5] {
        let (_, po) = cross_fit(&f, &linear_roles(), &lin, &lin, &DmlConfig { k_folds: k, seed: 4, ..Default::default() }).unwrap();
        let est = estimate_constant_effect(&po).unwrap().theta;
        let w: Vec<Vec<f64>> = w1.iter().zip(&w2).map(|(a, b)| vec![*a, *b]).collect();
        let oracle = robinson_oracle(&w, &t, &y, &po.fold_assignment, k);
        let d = (est - oracle).abs();
        r.check(d <= 1e-8, format!("K={k}: |theta {est:.10} - oracle {oracle:.10}| = {d:.2e} <= 1e-8"));
    }
    r
}

fn c7() -> Report {
    let lin = LearnerSpec::linear();
    let covered = (0..200u64)
        .filter(|&s| {
            let (w1, w2, t, y) = linear_dgp(500, 0.7, 5000 + s);
            let f = frame(&[("W1", w1), ("W2", w2), ("T", t), ("Y", y)]);
            let cfg = DmlConfig { seed: s, ..Default::default() };
            let (_, po) = cross_fit(&f, &linear_roles(), &lin, &lin, &cfg).unwrap();
            let ci = estimate_constant_effect(&po).unwrap().ci_95;
            ci.0 <= 0.7 && 0.7 <= ci.1
        })
        .count();
    let mut r = Report::new();
    r.check(covered >= 180, format!("95% CI covers theta in {covered}/200 replications (need >= 180)"));
    r
}

fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-300)
}

fn c8() -> Report {
    let mut rg = rng(2024);
    let mut worst: f64 = 0.0;
    for case in 0..20 {
        let p = rg.gen_range(1..5);
        let hidden: Vec<usize> = (0..rg.gen_range(1..4)).map(|_| rg.gen_range(2..8)).collect();
        let n = rg.gen_range(2..12);
        let layout = NetworkLayout::new(p, &hidden);
        let params = layout.init_params(&mut rg);
        let x: Vec<f64> = (0..n * p).map(|_| rg.gen_range(-2.0..2.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rg.gen_range(0.1..3.0)).collect();
        let cfg = MlpConfig {
            hidden_layers: hidden,
            output: if case % 2 == 0 { OutputActivation::Identity } else { OutputActivation::Softplus },
            dropout_rate: if case % 3 == 0 { 0.2 } else { 0.0 },
            weight_decay: if case % 4 < 2 { 0.1 } else { 0.0 },
            ..Default::default()
        };
        let mask = (cfg.dropout_rate > 0.0).then(|| {
            let mut m = vec![0.0; n * layout.n_hidden_units()];
            sample_mask(&mut rg, cfg.dropout_rate, &mut m);
            m
        });
        let g = mlp_gradient(&layout, &params, &x, &y, &cfg, mask.as_deref());
        let loss = |q: &[f64]| {
            mlp_loss_and_gradient(&layout, q, &x, &y, None, cfg.output, cfg.weight_decay, mask.as_deref()).0
        };
        let h = 1e-5;
        let fd: Vec<f64> = (0..params.len())
            .map(|k| {
                let (mut a, mut b) = (params.clone(), params.clone());
                a[k] += h;
                b[k] -= h;
                (loss(&a) - loss(&b)) / (2.0 * h)
            })
            .collect();
        worst = worst.max(relative_error(&g, &fd));
    }
    let mut r = Report::new();
    r.check(worst <= 1e-4, format!("max relative error over 20 configurations {worst:.2e} <= 1e-4"));
    r
}

fn c9() -> Report {
    let mut r = Report::new();
    let v = truncated_normal(1_000_000, 0.2, -0.95, 0.95, 17);
    let s = summarize_values(&v).unwrap();
    let inside = v.iter().all(|e| (-0.95..=0.95).contains(e));
    r.check(inside, "truncated normal support [-0.95, 0.95]".into());
    r.check(
        s.mean.abs() <= 0.002 && (0.197..=0.203).contains(&s.sd),
        format!("truncated normal mean {:.5}, sd {:.5}", s.mean, s.sd),
    );
    let drivers = bundled_drivers(&DriverConfig { n_years: 1, ..Default::default() }).unwrap();
    let q = gen_q10(&drivers, &Q10GenConfig::default()).unwrap();
    let rb_min = q.column("R_b_syn").unwrap().iter().copied().fold(f64::INFINITY, f64::min);
    let d = (rb_min - 0.075 * std::f64::consts::PI).abs();
    r.check(d <= 1e-12, format!("min R_b {rb_min:.15} equals 0.075*pi (diff {d:.1e})"));
    let lue = light_use_efficiency(20.0, 10.0);
    r.check(lue == 0.5, format!("LUE(20 C, 10 hPa) = {lue}"));
    r
}

fn c10() -> Report {
    let mut r = Report::new();
    let sw: Vec<f64> = (0..200).map(|i| if i < 5 { 0.0 } else { 1000.0 * (i - 4) as f64 / 195.0 }).collect();
    let mut rg = rng(10);
    let mut cases = vec![(0.05, 20.0, 2.0)];
    cases.extend((0..9).map(|_| (rg.gen_range(0.005..0.2), rg.gen_range(5.0..50.0), rg.gen_range(-2.0..6.0))));
    let mut worst: f64 = 0.0;
    for (a, b, g) in cases {
        let truth = HyperbolaParams::new(a, b, g);
        let nee: Vec<f64> = sw.iter().map(|&s| truth.nee(s)).collect();
        let fit = fit_hyperbola(&sw, &nee, &HyperbolaParams::initial_guess(&sw, &nee)).unwrap();
        let rel = |x: f64, y: f64| (x - y).abs() / y.abs();
        worst = worst.max(rel(fit.alpha, a)).max(rel(fit.beta, b)).max((fit.gamma - g).abs() / g.abs().max(1.0));
    }
    r.check(worst <= 1e-4, format!("noise-free recovery over 10 parameter sets, worst relative error {worst:.2e}"));

    let drivers = bundled_drivers(&DriverConfig { n_years: 1, ..Default::default() }).unwrap();
    let data = gen_lue(&drivers, &LueGenConfig { sigma: 0.0, seed: 1 }).unwrap();
    let out = transform_sw(&data, "SW_IN", "NEE_syn", WindowGeometry::default()).unwrap();
    let grid: Vec<f64> = (0..=300).map(|k| k as f64 * 5.0).collect();
    let (mut fitted, mut ok) = (0, true);
    for w in &out.windows {
        if let WindowStatus::Fitted(p) = &w.status {
            fitted += 1;
            ok &= p.uptake(0.0) == 0.0;
            ok &= grid.windows(2).all(|s| p.uptake(s[1]) >= p.uptake(s[0]));
        }
    }
    r.check(ok && fitted > 0, format!("f(0) = 0 and f monotone on all {fitted} fitted windows"));
    r
}

fn c11() -> Report {
    let (a, b) = (tempdir().unwrap(), tempdir().unwrap());
    let make = |out: &Path| ExperimentConfig {
        sample_sizes: vec![250],
        replications: 2,
        output_dir: out.to_path_buf(),
        ..Default::default()
    };
    run_q10_simulation(&make(a.path()), &RunOptions { jobs: 1, resume: false }).unwrap();
    run_q10_simulation(&make(b.path()), &opts()).unwrap();
    let mut r = Report::new();
    for f in ["q10_runs.csv", "q10_summary.csv"] {
        let same = std::fs::read(a.path().join(f)).unwrap() == std::fs::read(b.path().join(f)).unwrap();
        r.check(same, format!("{f} byte-identical across repeated runs (all methods)"));
    }
    r
}

fn main() {
    let criteria: [(&str, &str, fn() -> Report); 11] = [
        ("C1", "Q10 recovery without regularization", c1),
        ("C2", "robustness to regularization", c2),
        ("C3", "equifinality with temperature as a network input", c3),
        ("C4", "alternate Q10 values", c4),
        ("C5", "light-use-efficiency noise sweep", c5),
        ("C6", "oracle equivalence", c6),
        ("C7", "confidence interval coverage", c7),
        ("C8", "gradient correctness", c8),
        ("C9", "generator invariants", c9),
        ("C10", "hyperbola recovery", c10),
        ("C11", "determinism", c11),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut results = Vec::new();
    for (id, name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| f.eq_ignore_ascii_case(id)) {
            continue;
        }
        let start = Instant::now();
        let report = run();
        let secs = start.elapsed().as_secs_f64();
        for line in &report.lines {
            println!("    {id} {line}");
        }
        println!("{id} {} {name} ({secs:.0}s)", if report.pass { "PASS" } else { "FAIL" });
        results.push(report.pass);
    }
    let passed = results.iter().filter(|p| **p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed < results.len() && std::env::var("CHM_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
