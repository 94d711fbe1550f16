use pulsefocus::fitkit::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Every parameter scaled by a factor in [0.7, 1.3]. Centers of a
/// multi-component sum move by up to ±30% of their own FWHM instead: a
/// center has no natural origin, and a shift of several half-widths leaves no
/// basin around the true peak for a local optimizer.
fn perturb(p: &[f64], rng: &mut ChaCha8Rng, spec: &ModelSpec) -> Vec<f64> {
    let names = spec.param_names();
    let multi = matches!(spec, ModelSpec::LorentzianSum(n) if *n > 1);
    (0..p.len())
        .map(|i| {
            let u = rng.gen_range(-0.3..=0.3);
            match names[i].as_str() {
                "eta" => (p[i] * (1.0 + u)).clamp(0.0, 1.0),
                n if multi && n.starts_with("center") => p[i] + u * p[i + 1],
                _ => p[i] * (1.0 + u),
            }
        })
        .collect()
}

fn assert_recovered(spec: &ModelSpec, truth: &[f64], x: &[f64], seeds: std::ops::Range<u64>) {
    let y = eval_model(spec, truth, x).unwrap();
    for seed in seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let init = perturb(truth, &mut rng, spec);
        let r = fit(spec, x, &y, None, &init).unwrap();
        assert!(r.converged, "{spec} seed {seed}: {}", r.message);
        for (i, (got, want)) in r.params.iter().zip(truth).enumerate() {
            let rel = (got - want).abs() / want.abs().max(1e-300);
            assert!(rel < 1e-6, "{spec} seed {seed} param {i}: {got} vs {want}");
        }
    }
}

#[test]
fn single_lorentzian_recovery() {
    let x = grid(-100.0, 120.0, 301);
    assert_recovered(&ModelSpec::LorentzianSum(1), &[0.05, 1.0, 10.0, 27.0], &x, 0..20);
}

#[test]
fn lorentzian_sum_recovery() {
    let x = grid(-200.0, 200.0, 401);
    let truth = [0.9, -0.3, -60.0, 22.0, -0.5, 8.0, 27.0, -0.2, 70.0, 18.0];
    assert_recovered(&ModelSpec::LorentzianSum(3), &truth, &x, 0..40);
}

#[test]
fn pseudo_voigt_gaussian_recovery() {
    let x = grid(-300.0, 300.0, 241);
    assert_recovered(&ModelSpec::PseudoVoigt, &[0.1, 1.0, 12.0, 104.0, 0.4], &x, 0..20);
    assert_recovered(&ModelSpec::Gaussian, &[0.02, 3.0, 1.8, 0.9], &grid(0.0, 4.0, 81), 0..20);
}

#[test]
fn decay_recovery() {
    let t = grid(0.0, 5000.0, 501);
    assert_recovered(&ModelSpec::Exponential, &[0.02, 1.0, 662.0], &t, 0..20);
    let t = grid(0.0, 20000.0, 801);
    assert_recovered(&ModelSpec::BiExponential, &[0.01, 0.6, 180.0, 0.4, 4800.0], &t, 0..20);
}

#[test]
fn trace_model_recovery() {
    let times = grid(0.0, 400.0, 401);
    let base: Vec<f64> = times.iter().map(|t| 0.5 + 0.4 * (t / 10.0).cos()).collect();
    let spec = ModelSpec::TraceModel { times: times.clone(), base };
    assert_recovered(&spec, &[3.0, 662.0], &times, 0..20);
}

#[test]
fn seven_lorentzian_centers() {
    let x = grid(-200.0, 200.0, 401);
    let mut truth = vec![1.0];
    for n in -3..=3 {
        let amp = -0.4 / (1.0 + (n as f64).abs());
        truth.extend([amp, n as f64 * 50.0 + 0.3 * n as f64, 20.0]);
    }
    let spec = ModelSpec::LorentzianSum(7);
    let y = eval_model(&spec, &truth, &x).unwrap();
    let init = lorentzian_sum_init(&x, &y, 7, 50.0, 0.0);
    let r = fit(&spec, &x, &y, None, &init).unwrap();
    assert!(r.converged);
    for i in 0..7 {
        assert!((r.params[2 + 3 * i] - truth[2 + 3 * i]).abs() < 0.5, "center {i}: {}", r.params[2 + 3 * i]);
    }
    let sats = extract_satellites(&r, 50.0, 0.0);
    assert_eq!(sats.iter().map(|s| s.order).collect::<Vec<_>>(), vec![-3, -2, -1, 1, 2, 3]);
    assert!(sats.iter().all(|s| (s.residual - 0.3 * s.order as f64).abs() < 0.5));
}

/// Analytic partial derivatives of baseline + Σ aᵢ·L(x; cᵢ, wᵢ).
fn lorentzian_gradient(p: &[f64], x: f64) -> Vec<f64> {
    let mut g = vec![1.0];
    for k in 0..(p.len() - 1) / 3 {
        let (a, c, w) = (p[1 + 3 * k], p[2 + 3 * k], p[3 + 3 * k]);
        let d = x - c;
        let h = 0.25 * w * w;
        let den = d * d + h;
        g.push(h / den);
        g.push(a * h * 2.0 * d / (den * den));
        g.push(a * 0.5 * w * d * d / (den * den));
    }
    g
}

#[test]
fn finite_difference_jacobian_matches_analytic() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let spec = ModelSpec::LorentzianSum(2);
    for _ in 0..50 {
        let p = vec![
            rng.gen_range(-1.0..1.0),
            rng.gen_range(0.2..2.0),
            rng.gen_range(-80.0..80.0),
            rng.gen_range(5.0..60.0),
            rng.gen_range(-2.0..-0.2),
            rng.gen_range(-80.0..80.0),
            rng.gen_range(5.0..60.0),
        ];
        let x: Vec<f64> = (0..12).map(|_| rng.gen_range(-150.0..150.0)).collect();
        let jac = jacobian(&spec, &p, &x).unwrap();
        for (i, &xi) in x.iter().enumerate() {
            let g = lorentzian_gradient(&p, xi);
            let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (k, gk) in g.iter().enumerate() {
                let err = (jac[(i, k)] - gk).abs();
                assert!(err <= 1e-5 * gk.abs().max(1e-3 * scale), "x={xi} k={k}: {} vs {gk}", jac[(i, k)]);
            }
        }
    }
}

#[test]
fn residual_never_increases() {
    let x = grid(-150.0, 150.0, 201);
    let truth = [0.2, 1.0, 10.0, 27.0, -0.4, 60.0, 15.0];
    let spec = ModelSpec::LorentzianSum(2);
    let y: Vec<f64> = eval_model(&spec, &truth, &x)
        .unwrap()
        .iter()
        .enumerate()
        .map(|(i, v)| v + 0.01 * ((i * 7919 % 97) as f64 / 97.0 - 0.5))
        .collect();
    let init = [0.0, 0.6, -5.0, 50.0, -0.1, 45.0, 30.0];
    let mut last = f64::INFINITY;
    for k in 1..40 {
        let opts = FitOptions { max_iterations: k, ..FitOptions::default() };
        let r = fit_with(&spec, &x, &y, None, &init, &opts).unwrap();
        assert!(r.residual_norm <= last, "iteration {k}: {} > {last}", r.residual_norm);
        last = r.residual_norm;
    }
}

#[test]
fn rescaling_invariance() {
    let x = grid(-150.0, 150.0, 201);
    let spec = ModelSpec::PseudoVoigt;
    let truth = [0.1, 1.0, 5.0, 80.0, 0.3];
    let y: Vec<f64> = eval_model(&spec, &truth, &x)
        .unwrap()
        .iter()
        .enumerate()
        .map(|(i, v)| v + 0.02 * (i as f64 * 0.7).sin())
        .collect();
    let w: Vec<f64> = x.iter().map(|v| 1.0 + (v / 150.0).powi(2)).collect();
    let init = [0.0, 0.8, 0.0, 60.0, 0.5];
    let a = fit(&spec, &x, &y, Some(&w), &init).unwrap();
    let s = 37.5;
    let ys: Vec<f64> = y.iter().map(|v| v * s).collect();
    let ws: Vec<f64> = w.iter().map(|v| v * 4.0).collect();
    let init_s = [0.0, 0.8 * s, 0.0, 60.0, 0.5];
    let b = fit(&spec, &x, &ys, Some(&ws), &init_s).unwrap();
    assert!(a.converged && b.converged);
    for (k, (pa, pb)) in a.params.iter().zip(&b.params).enumerate() {
        let want = if k < 2 { pa * s } else { *pa };
        assert!((pb - want).abs() <= 1e-6 * want.abs().max(1e-3), "param {k}: {pb} vs {want}");
    }
}

#[test]
fn gaussian_calibration_center() {
    // population-vs-amplitude sweep peaked at the π amplitude
    let x0 = 1.844;
    let x = grid(0.5, 3.5, 61);
    let y = eval_model(&ModelSpec::Gaussian, &[0.0, 0.95, x0, 1.9], &x).unwrap();
    let r = fit(&ModelSpec::Gaussian, &x, &y, None, &[0.05, 0.8, 1.5, 1.2]).unwrap();
    assert!((r.params[2] - x0).abs() < 1e-9);
}

#[test]
fn linewidths_from_synthetic_lines() {
    let x = grid(-400.0, 400.0, 401);
    let pv = eval_model(&ModelSpec::PseudoVoigt, &[0.0, 1.0, 0.0, 104.0, 0.6], &x).unwrap();
    let r = fit(&ModelSpec::PseudoVoigt, &x, &pv, None, &[0.1, 0.7, 10.0, 70.0, 0.5]).unwrap();
    assert!((linewidth_report(&r)[0].fwhm - 104.0).abs() < 1e-6);
    let l = eval_model(&ModelSpec::LorentzianSum(1), &[0.0, -1.0, 0.0, 27.0], &x).unwrap();
    let r = fit(&ModelSpec::LorentzianSum(1), &x, &l, None, &[0.0, -0.5, 3.0, 40.0]).unwrap();
    assert!((linewidth_report(&r)[0].fwhm - 27.0).abs() < 1e-6);
}

#[test]
fn covariance_is_symmetric_psd() {
    let x = grid(-150.0, 150.0, 201);
    let spec = ModelSpec::LorentzianSum(1);
    let y: Vec<f64> = eval_model(&spec, &[0.1, 1.0, 3.0, 27.0], &x)
        .unwrap()
        .iter()
        .enumerate()
        .map(|(i, v)| v + 0.01 * (i as f64 * 1.7).cos())
        .collect();
    let r = fit(&spec, &x, &y, None, &[0.0, 0.8, 0.0, 20.0]).unwrap();
    let n = r.params.len();
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| r.covariance[i][j]);
    assert!((&m - m.transpose()).norm() <= 1e-12 * m.norm());
    assert!(m.clone().symmetric_eigen().eigenvalues.iter().all(|&e| e >= -1e-12 * m.norm()));
    assert!(r.std_errors().iter().all(|e| *e > 0.0));
}
