use std::path::Path;
use std::process::{Command, Output};

use pulsefocus::cli::config::RunConfig;
use pulsefocus::cli::output::{parse_csv, Table};
use pulsefocus::cli::presets::preset;
use pulsefocus::cli::{EXIT_CONFIG, EXIT_FIT};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pulsefocus")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    parse_csv(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn col<'a>(t: &'a (Vec<String>, Vec<Vec<f64>>), name: &str) -> &'a [f64] {
    let i = t.0.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    &t.1[i]
}

#[test]
fn emitted_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(&["spectrum", "--preset", "narrow", "--seed", "7", "--angle-pi", "0.5", "--emit-config"]);
    let c = RunConfig::from_toml(&text).unwrap();
    let mut want = preset("narrow").unwrap();
    want.ensemble.seed = 7;
    want.pulses.rotation_angle_pi = 0.5;
    assert_eq!(c, want);
    let file = dir.path().join("run.toml");
    std::fs::write(&file, &text).unwrap();
    assert_eq!(ok(&["spectrum", "--config", file.to_str().unwrap(), "--emit-config"]), text);
}

#[test]
fn output_is_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let base = ["spectrum", "--preset", "narrow", "--size", "16", "--points", "61", "--out", out];
    let mut texts = Vec::new();
    for threads in ["1", "3", "1"] {
        let mut args = vec!["--threads", threads];
        args.extend(base);
        ok(&args);
        texts.push(std::fs::read(dir.path().join("narrow.csv")).unwrap());
    }
    assert_eq!(texts[0], texts[1]);
    assert_eq!(texts[0], texts[2]);
    let t = csv(&dir.path().join("narrow.csv"));
    assert_eq!(t.0, ["freq_mhz", "p1", "p2", "q", "q_stderr"]);
    assert!(col(&t, "q_stderr").iter().all(|e| *e > 0.0));
}

#[test]
fn free_decay_preset_is_the_natural_lorentzian() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["spectrum", "--preset", "free_decay", "--out", dir.path().to_str().unwrap()]);
    let t = csv(&dir.path().join("free_decay.csv"));
    let f = col(&t, "freq_mhz");
    let fwhm = 1e3 / (2.0 * std::f64::consts::PI * 12.3);
    let p1 = col(&t, "p1");
    let peak = p1.iter().cloned().fold(f64::MIN, f64::max);
    for (x, y) in f.iter().zip(p1) {
        let lorentz = 1.0 / (1.0 + (2.0 * x / fwhm).powi(2));
        assert!((y / peak - lorentz).abs() < 1e-3, "{x} MHz: {} vs {lorentz}", y / peak);
    }
    for name in ["p2", "q"] {
        let v = col(&t, name);
        let i = (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
        assert_eq!(f[i], 0.0, "{name}");
    }
    assert!((col(&t, "q")[f.len() / 2] - 1.0).abs() < 1e-12);
}

/// π / ∫ exp(−t²/2σ²) over ±3σ by composite Simpson.
fn truncated_pi_amplitude(fwhm_ns: f64) -> f64 {
    let sigma = fwhm_ns * 1e-9 / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt());
    let (a, n) = (3.0 * sigma, 4000);
    let h = 2.0 * a / n as f64;
    let g = |t: f64| (-0.5 * (t / sigma).powi(2)).exp();
    let inner: f64 = (1..n).map(|i| g(-a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
    std::f64::consts::PI / ((g(-a) + g(a) + inner) * h / 3.0)
}

fn printed(stdout: &str, key: &str) -> f64 {
    let line = stdout.lines().find(|l| l.starts_with(&format!("{key} = "))).unwrap_or_else(|| panic!("no {key}"));
    line.split(" = ").nth(1).unwrap().parse().unwrap()
}

#[test]
fn calibrate_reports_amplitude_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cal.csv");
    let stdout = ok(&[
        "calibrate",
        "--fwhm-ns",
        "1.6",
        "--lifetime-ns",
        "1e9",
        "--points",
        "41",
        "--out",
        path.to_str().unwrap(),
    ]);
    let omega = printed(&stdout, "omega_peak_rad_per_s");
    assert!((omega / truncated_pi_amplitude(1.6) - 1.0).abs() < 1e-7, "{omega}");
    assert!((printed(&stdout, "omega_peak_mhz") - omega / (2.0 * std::f64::consts::PI * 1e6)).abs() < 1e-4);
    let center = printed(&stdout, "sweep_fit_center_rad_per_s");
    assert!((center / omega - 1.0).abs() < 0.01);
    let t = csv(&path);
    assert_eq!(t.0, ["omega_peak_rad_per_s", "excited_population"]);
    assert_eq!(t.1[0].len(), 41);

    let half = ok(&["calibrate", "--angle-pi", "0.5", "--points", "11", "--out", path.to_str().unwrap()]);
    assert!((printed(&half, "omega_peak_rad_per_s") / omega - 0.5).abs() < 1e-8);
    assert_eq!(run(&["calibrate", "--fwhm-ns", "0", "--out", path.to_str().unwrap()]).status.code(), Some(EXIT_CONFIG));
}

#[test]
fn fit_recovers_bi_exponential_and_flags_non_convergence() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("decay.csv");
    let t: Vec<f64> = (0..300).map(|i| i as f64 * 10.0).collect();
    let y: Vec<f64> = t.iter().map(|v| 0.02 + 0.7 * (-v / 45.0).exp() + 0.3 * (-v / 662.0).exp()).collect();
    std::fs::write(&data, Table::new(&["time_ns", "counts"], vec![t, y]).to_csv()).unwrap();
    let out = dir.path().to_str().unwrap();
    ok(&["fit", "--model", "bi_exponential", "--data", data.to_str().unwrap(), "--out", out]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("decay.fit.json")).unwrap()).unwrap();
    assert_eq!(report["result"]["converged"], true);
    let p: Vec<f64> = report["result"]["params"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    let mut taus = [p[2], p[4]];
    taus.sort_by(f64::total_cmp);
    assert!((taus[0] / 45.0 - 1.0).abs() < 1e-6 && (taus[1] / 662.0 - 1.0).abs() < 1e-6, "{p:?}");
    let text = std::fs::read_to_string(dir.path().join("decay.fit.txt")).unwrap();
    assert!(text.contains("converged = true") && text.contains("tau_1 = "));

    let capped = run(&[
        "fit",
        "--model",
        "bi_exponential",
        "--data",
        data.to_str().unwrap(),
        "--out",
        out,
        "--stem",
        "capped",
        "--max-iterations",
        "1",
    ]);
    assert_eq!(capped.status.code(), Some(EXIT_FIT));
    assert!(std::fs::read_to_string(dir.path().join("capped.fit.txt")).unwrap().contains("converged = false"));

    let bad = run(&["fit", "--model", "gaussian", "--data", data.to_str().unwrap(), "--out", out, "--init", "1,2"]);
    assert_eq!(bad.status.code(), Some(EXIT_CONFIG));
}

#[test]
fn tau_sweep_places_satellites_at_half_inverse_delay() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    ok(&["sweep", "--preset", "tau_sweep", "--sampling", "uniform", "--size", "41", "--points", "201", "--out", out]);
    let t = csv(&dir.path().join("tau_sweep_tau_ns_summary.csv"));
    assert_eq!(col(&t, "value"), [7.0, 10.0, 14.0]);
    for (spacing, want) in col(&t, "satellite_spacing_mhz").iter().zip([71.4, 50.0, 35.7]) {
        assert!((spacing - want).abs() < 0.05, "{spacing}");
    }
    for ((m1, p1), d) in col(&t, "sat_m1_mhz").iter().zip(col(&t, "sat_p1_mhz")).zip(col(&t, "satellite_spacing_mhz")) {
        assert!((p1 / d - 1.0).abs() < 0.05 && (m1 / d + 1.0).abs() < 0.05, "{m1} {p1} vs {d}");
    }
    for k in 0..3 {
        assert!(dir.path().join(format!("tau_sweep_tau_ns_{k:02}.csv")).exists());
    }
}

#[test]
fn onset_trace_writes_one_scan_per_window() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    ok(&["trace", "--preset", "onset", "--size", "8", "--points", "11", "--out", out]);
    let trace = csv(&dir.path().join("onset_trace.csv"));
    assert_eq!(trace.0, ["time_ns", "signal"]);
    for k in 1..=4 {
        let t = csv(&dir.path().join(format!("onset_intervals_{k}.csv")));
        assert_eq!(t.0, ["freq_mhz", "signal", "reference", "contrast", "contrast_stderr"]);
        assert_eq!(t.1[0].len(), 11);
    }
}

#[test]
fn bad_input_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.toml");
    let text = preset("narrow").unwrap().to_toml().unwrap().replace("[ensemble]", "[ensemble]\ncolour = 1");
    std::fs::write(&file, text).unwrap();
    let f = file.to_str().unwrap();
    for args in [
        vec!["spectrum", "--config", f],
        vec!["spectrum", "--preset", "nope"],
        vec!["spectrum", "--preset", "narrow", "--tau-ns", "2"],
        vec!["sweep", "--preset", "narrow"],
        vec!["trace", "--preset", "narrow", "--emit-config", "--size", "0"],
        vec!["spectrum"],
    ] {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(EXIT_CONFIG), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
    let trace = run(&["trace", "--preset", "narrow", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(trace.status.code(), Some(EXIT_CONFIG));
}
