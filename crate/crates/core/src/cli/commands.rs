use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::config::{Resolved, RunConfig};
use super::output::{fmt_num, line_plot, read_csv, write_file, Series, Table};
use super::presets::SweepAxis;
use crate::dynamics::{evolve, TimeGrid};
use crate::error::{Error, Result};
use crate::fitkit::{
    carrier_feature, extract_satellites, fit, fit_with, initial_guess, linewidth_report, satellite_fit, FitOptions,
    FitResult, Linewidth, ModelSpec, Satellite,
};
use crate::params::EmitterParams;
use crate::pulse::{calibrate_pulse_amplitude, PulseSequence, DEFAULT_SUPPORT_SIGMAS};
use crate::spectra::{ensemble_spectrum, linspace, Spectrum};
use crate::state::DensityMatrix;
use crate::tracemodel::{probe_scan, simulate_trace};
use crate::units::{ns_to_s, rad_per_s_to_mhz, s_to_ns, GAUSSIAN_FWHM_PER_SIGMA};

fn out_path(config: &RunConfig, suffix: &str) -> PathBuf {
    Path::new(&config.output.dir).join(format!("{}{suffix}", config.output.stem))
}

fn mhz(hz: &[f64]) -> Vec<f64> {
    hz.iter().map(|f| f * 1e-6).collect()
}

fn compute_spectrum(r: &Resolved) -> Result<Spectrum> {
    ensemble_spectrum(&r.model, &r.seq, &r.params, &r.grid, &r.freqs_hz)
}

fn spectrum_table(s: &Spectrum) -> Table {
    Table::new(
        &["freq_mhz", "p1", "p2", "q", "q_stderr"],
        vec![mhz(&s.frequencies), s.p1.clone(), s.p2.clone(), s.q.clone(), s.stderr.clone()],
    )
}

/// Satellite spacing 1/(2τ) in MHz.
fn spacing_mhz(config: &RunConfig) -> f64 {
    500.0 / config.pulses.interpulse_delay_ns
}

fn spectrum_svg(config: &RunConfig, s: &Spectrum) -> String {
    let x = mhz(&s.frequencies);
    let d = spacing_mhz(config);
    let reach = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let n = (reach / d).floor() as i64;
    let guides: Vec<f64> = (-n..=n).map(|k| k as f64 * d).collect();
    let title = format!(
        "N = {}, τ = {} ns, ensemble FWHM {} MHz",
        config.pulses.n_pulses, config.pulses.interpulse_delay_ns, config.ensemble.fwhm_mhz
    );
    line_plot(
        &title,
        "detuning from pulse carrier (MHz)",
        &[
            Series { label: "P1", x: &x, y: &s.p1 },
            Series { label: "P2", x: &x, y: &s.p2 },
            Series { label: "Q", x: &x, y: &s.q },
        ],
        &guides,
    )
}

/// Spectrum CSV, the resolved config next to it and an optional SVG.
pub fn cmd_spectrum(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let r = config.resolve()?;
    let s = compute_spectrum(&r)?;
    let mut files = vec![
        write_file(&out_path(config, ".csv"), &spectrum_table(&s).to_csv())?,
        write_file(&out_path(config, ".config.toml"), &config.to_toml()?)?,
    ];
    if config.output.svg {
        files.push(write_file(&out_path(config, ".svg"), &spectrum_svg(config, &s))?);
    }
    Ok(files)
}

/// Carrier and satellite metrics of one spectrum, frequencies in MHz.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSummary {
    pub satellite_spacing: f64,
    /// −1 local minimum of Q at the carrier, +1 maximum, 0 none.
    pub carrier_extremum: f64,
    /// Q interpolated at the carrier.
    pub carrier_q: f64,
    pub carrier_fwhm: f64,
    pub carrier_amplitude: f64,
    pub carrier_converged: bool,
    /// Fitted P₁ satellite centers of orders −2, −1, +1, +2 (NaN when absent).
    pub satellites: [f64; 4],
}

/// Carrier feature from a Lorentzian fit of Q within ±1/(4τ); satellites from a
/// five-component Lorentzian fit of P₁ seeded at the ±n/(2τ) grid.
pub fn summarize(s: &Spectrum, tau_ns: f64) -> SpectrumSummary {
    let x = mhz(&s.frequencies);
    let d = 500.0 / tau_ns;
    let carrier = carrier_feature(&x, &s.q, 0.0, 0.5 * d);
    let (carrier_extremum, carrier_q, carrier_fwhm, carrier_amplitude, carrier_converged) = match &carrier {
        Ok(f) => {
            (f.extremum.map_or(0.0, |e| if e.1 { -1.0 } else { 1.0 }), f.value, f.fwhm, f.amplitude, f.fit.converged)
        }
        Err(_) => (0.0, crate::fitkit::interpolate(&x, &s.q, 0.0), f64::NAN, f64::NAN, false),
    };
    let mut satellites = [f64::NAN; 4];
    if let Ok((_, sats)) = satellite_fit(&x, &s.p1, 5, d, 0.0) {
        for (slot, order) in satellites.iter_mut().zip([-2, -1, 1, 2]) {
            if let Some(best) =
                sats.iter().filter(|s| s.order == order).min_by(|a, b| a.residual.abs().total_cmp(&b.residual.abs()))
            {
                *slot = best.center;
            }
        }
    }
    SpectrumSummary {
        satellite_spacing: d,
        carrier_extremum,
        carrier_q,
        carrier_fwhm,
        carrier_amplitude,
        carrier_converged,
        satellites,
    }
}

const SUMMARY_HEADER: [&str; 11] = [
    "value",
    "satellite_spacing_mhz",
    "carrier_extremum",
    "carrier_q",
    "carrier_fwhm_mhz",
    "carrier_amplitude",
    "carrier_converged",
    "sat_m2_mhz",
    "sat_m1_mhz",
    "sat_p1_mhz",
    "sat_p2_mhz",
];

/// One spectrum per value plus a summary table.
pub fn cmd_sweep(config: &RunConfig, axis: SweepAxis, values: &[f64]) -> Result<Vec<PathBuf>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let configs = values.iter().map(|v| axis.apply(config, *v)).collect::<Result<Vec<_>>>()?;
    let resolved = configs.iter().map(RunConfig::resolve).collect::<Result<Vec<_>>>()?;
    let mut files = Vec::new();
    let mut columns = vec![Vec::new(); SUMMARY_HEADER.len()];
    for (k, ((value, c), r)) in values.iter().zip(&configs).zip(&resolved).enumerate() {
        let s = compute_spectrum(r)?;
        let suffix = format!("_{}_{k:02}", axis.name());
        files.push(write_file(&out_path(config, &format!("{suffix}.csv")), &spectrum_table(&s).to_csv())?);
        if config.output.svg {
            files.push(write_file(&out_path(config, &format!("{suffix}.svg")), &spectrum_svg(c, &s))?);
        }
        let m = summarize(&s, c.pulses.interpulse_delay_ns);
        let row = [
            *value,
            m.satellite_spacing,
            m.carrier_extremum,
            m.carrier_q,
            m.carrier_fwhm,
            m.carrier_amplitude,
            if m.carrier_converged { 1.0 } else { 0.0 },
            m.satellites[0],
            m.satellites[1],
            m.satellites[2],
            m.satellites[3],
        ];
        for (col, v) in columns.iter_mut().zip(row) {
            col.push(v);
        }
    }
    let summary = Table::new(&SUMMARY_HEADER, columns);
    files.push(write_file(&out_path(config, &format!("_{}_summary.csv", axis.name())), &summary.to_csv())?);
    files.push(write_file(&out_path(config, ".config.toml"), &config.to_toml()?)?);
    Ok(files)
}

/// Ensemble-averaged fluorescence trace at the configured probe detuning and
/// one probe-scan CSV per window.
pub fn cmd_trace(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let r = config.resolve()?;
    let t = r.trace.as_ref().ok_or_else(|| Error::Config("trace needs at least one [[windows]] entry".into()))?;
    let realizations = r.model.realizations()?;
    let probe = t.probe.with_detuning(t.probe_detuning);
    let traces = realizations
        .par_iter()
        .map(|z| simulate_trace(&t.seq, &probe, z.detuning, &r.params, &t.grid))
        .collect::<Result<Vec<_>>>()?;
    let times = traces[0].times.clone();
    let mut signal = vec![0.0; times.len()];
    for (z, tr) in realizations.iter().zip(&traces) {
        for (acc, v) in signal.iter_mut().zip(&tr.signal) {
            *acc += z.weight * v;
        }
    }
    let times_ns: Vec<f64> = times.iter().map(|v| s_to_ns(*v)).collect();
    let mut files = vec![write_file(
        &out_path(config, "_trace.csv"),
        &Table::new(&["time_ns", "signal"], vec![times_ns.clone(), signal.clone()]).to_csv(),
    )?];

    let scan = probe_scan(&t.seq, &t.probe, &r.model, &r.params, &t.grid, &r.freqs_hz, &t.windows)?;
    if !scan.probe_is_weak {
        eprintln!("warning: probe amplitude is not small against the pulse peak");
    }
    let x = mhz(&scan.frequencies);
    let mut series = Vec::new();
    for curve in &scan.curves {
        let name = curve.window.display_name();
        let table = Table::new(
            &["freq_mhz", "signal", "reference", "contrast", "contrast_stderr"],
            vec![
                x.clone(),
                curve.signal.clone(),
                vec![curve.reference; x.len()],
                curve.contrast.clone(),
                curve.stderr.clone(),
            ],
        );
        files.push(write_file(&out_path(config, &format!("_{name}.csv")), &table.to_csv())?);
        series.push((name, curve.contrast.clone()));
    }
    files.push(write_file(&out_path(config, ".config.toml"), &config.to_toml()?)?);
    if config.output.svg {
        let trace_svg =
            line_plot("ensemble trace", "time (ns)", &[Series { label: "signal", x: &times_ns, y: &signal }], &[]);
        files.push(write_file(&out_path(config, "_trace.svg"), &trace_svg)?);
        let s: Vec<Series> = series.iter().map(|(n, y)| Series { label: n, x: &x, y }).collect();
        files.push(write_file(
            &out_path(config, "_scan.svg"),
            &line_plot("probe scan contrast", "probe detuning (MHz)", &s, &[0.0]),
        )?);
    }
    Ok(files)
}

/// Inputs of [`cmd_fit`].
#[derive(Debug, Clone)]
pub struct FitRequest {
    pub model: String,
    pub data: PathBuf,
    /// Column names; x and y default to the first two columns.
    pub x: Option<String>,
    pub y: Option<String>,
    pub sigma: Option<String>,
    /// Base curve column for `trace_model`.
    pub base: Option<String>,
    pub init: Option<Vec<f64>>,
    /// Satellite spacing in the x unit, used to seed Lorentzian sums.
    pub spacing: Option<f64>,
    pub carrier: f64,
    pub max_iterations: usize,
    pub out_dir: PathBuf,
    pub stem: String,
    pub svg: bool,
}

#[derive(Debug, Serialize)]
pub struct FitReport {
    pub data: String,
    pub n_points: usize,
    pub std_errors: Vec<f64>,
    pub linewidths: Vec<Linewidth>,
    pub satellites: Vec<Satellite>,
    pub result: FitResult,
}

fn column(
    header: &[String],
    columns: &[Vec<f64>],
    name: Option<&str>,
    fallback: usize,
    what: &str,
) -> Result<Vec<f64>> {
    let idx = match name {
        Some(n) => header
            .iter()
            .position(|h| h == n)
            .ok_or_else(|| Error::Data(format!("no column '{n}' for {what} (columns: {})", header.join(", "))))?,
        None if fallback < header.len() => fallback,
        None => return Err(Error::Data(format!("data has no column {} for {what}", fallback + 1))),
    };
    Ok(columns[idx].clone())
}

fn report_text(report: &FitReport) -> String {
    let r = &report.result;
    let mut lines = vec![
        format!("model = {}", r.model),
        format!("data = {}", report.data),
        format!("n_points = {}", report.n_points),
        format!("converged = {}", r.converged),
        format!("iterations = {}", r.iterations),
        format!("residual_norm = {}", fmt_num(r.residual_norm)),
        format!("message = {}", r.message),
    ];
    for ((name, v), e) in r.param_names.iter().zip(&r.params).zip(&report.std_errors) {
        lines.push(format!("{name} = {}", fmt_num(*v)));
        lines.push(format!("{name}_std = {}", fmt_num(*e)));
    }
    for w in &report.linewidths {
        lines.push(format!(
            "linewidth_{} = {} +- {} at {}",
            w.component,
            fmt_num(w.fwhm),
            fmt_num(w.fwhm_std),
            fmt_num(w.center)
        ));
    }
    for s in &report.satellites {
        lines.push(format!(
            "satellite_{:+} = {} (predicted {}, residual {})",
            s.order,
            fmt_num(s.center),
            fmt_num(s.predicted),
            fmt_num(s.residual)
        ));
    }
    lines.push(String::new());
    lines.join("\n")
}

/// Fit a model to CSV data and write text and JSON reports. A fit that does
/// not converge still writes both and then returns [`Error::FitFailed`].
pub fn cmd_fit(req: &FitRequest) -> Result<Vec<PathBuf>> {
    let (header, columns) = read_csv(&req.data)?;
    let x = column(&header, &columns, req.x.as_deref(), 0, "x")?;
    let y = column(&header, &columns, req.y.as_deref(), 1, "y")?;
    let weights = match &req.sigma {
        Some(name) => {
            let s = column(&header, &columns, Some(name), 0, "sigma")?;
            if s.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::Data("sigma column must be positive".into()));
            }
            Some(s.iter().map(|v| 1.0 / (v * v)).collect::<Vec<_>>())
        }
        None => None,
    };
    let spec = if req.model.trim() == "trace_model" {
        let name = req.base.as_deref().ok_or_else(|| Error::Config("trace_model needs --base <column>".into()))?;
        ModelSpec::TraceModel { times: x.clone(), base: column(&header, &columns, Some(name), 0, "base")? }
    } else {
        req.model.parse::<ModelSpec>().map_err(|e| Error::Config(e.to_string()))?
    };
    let init = match &req.init {
        Some(v) => v.clone(),
        None => initial_guess(&spec, &x, &y, req.spacing, req.carrier)?,
    };
    let opts = FitOptions { max_iterations: req.max_iterations, ..FitOptions::default() };
    let result = fit_with(&spec, &x, &y, weights.as_deref(), &init, &opts)?;
    let satellites = match req.spacing {
        Some(d) => extract_satellites(&result, d, req.carrier),
        None => Vec::new(),
    };
    let report = FitReport {
        data: req.data.display().to_string(),
        n_points: x.len(),
        std_errors: result.std_errors(),
        linewidths: linewidth_report(&result),
        satellites,
        result,
    };
    let named = |ext: &str| req.out_dir.join(format!("{}.{ext}", req.stem));
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Data(e.to_string()))?;
    let mut files =
        vec![write_file(&named("fit.json"), &(json + "\n"))?, write_file(&named("fit.txt"), &report_text(&report))?];
    if req.svg {
        let xs = linspace(x[0], x[x.len() - 1], 4 * x.len());
        let ys = crate::fitkit::eval_model(&spec, &report.result.params, &xs)?;
        let svg = line_plot(
            &report.result.model,
            header.first().map_or("x", String::as_str),
            &[Series { label: "data", x: &x, y: &y }, Series { label: "fit", x: &xs, y: &ys }],
            &[],
        );
        files.push(write_file(&named("fit.svg"), &svg)?);
    }
    if !report.result.converged {
        return Err(Error::FitFailed { iterations: report.result.iterations, reason: report.result.message.clone() });
    }
    Ok(files)
}

/// Calibrated amplitude and the simulated check.
#[derive(Debug, Clone)]
pub struct Calibration {
    /// Peak Rabi frequency of the truncated pulse, rad/s.
    pub omega_peak: f64,
    /// Same for an untruncated Gaussian.
    pub omega_untruncated: f64,
    pub support_halfwidth: f64,
    pub amplitudes: Vec<f64>,
    pub excited_population: Vec<f64>,
    /// Center of a Gaussian fit to the population sweep (π pulses only).
    pub fitted_center: Option<f64>,
}

impl Calibration {
    /// Relative amplitude increase needed to compensate the truncation.
    pub fn truncation_correction(&self) -> f64 {
        self.omega_peak / self.omega_untruncated - 1.0
    }
}

/// Calibrate the peak amplitude and simulate one pulse from |g⟩ over 0.4–1.6×
/// that amplitude, reading ρ_ee at the end of the pulse.
pub fn calibrate(envelope_fwhm_ns: f64, angle_pi: f64, lifetime_ns: f64, points: usize) -> Result<Calibration> {
    let fwhm = ns_to_s(envelope_fwhm_ns);
    let angle = angle_pi * std::f64::consts::PI;
    if !(fwhm > 0.0) || !fwhm.is_finite() {
        return Err(Error::Config(format!("envelope FWHM must be positive, got {envelope_fwhm_ns} ns")));
    }
    if points < 5 {
        return Err(Error::Config("calibration sweep needs at least 5 points".into()));
    }
    let support = DEFAULT_SUPPORT_SIGMAS * fwhm / GAUSSIAN_FWHM_PER_SIGMA;
    let omega_peak = calibrate_pulse_amplitude(fwhm, angle, support).map_err(|e| Error::Config(e.to_string()))?;
    let omega_untruncated = calibrate_pulse_amplitude(fwhm, angle, f64::INFINITY)?;
    let params = EmitterParams::from_lifetime(ns_to_s(lifetime_ns)).map_err(|e| Error::Config(e.to_string()))?;
    let seq = PulseSequence::calibrated(1, 4.0 * support, fwhm, angle)?.with_first_center(support);
    let grid = TimeGrid::for_sequence(0.0, 2.0 * support, &seq)?;
    let amplitudes = linspace(0.4 * omega_peak, 1.6 * omega_peak, points);
    let excited_population = amplitudes
        .par_iter()
        .map(|a| {
            let s = PulseSequence { peak_amplitude: *a, ..seq };
            Ok(evolve(&DensityMatrix::ground(), &grid, 0.0, &s, &params)?.final_state().rho_ee())
        })
        .collect::<Result<Vec<_>>>()?;
    let fitted_center = if (angle_pi - 1.0).abs() < 1e-12 {
        let spec = ModelSpec::Gaussian;
        let init = initial_guess(&spec, &amplitudes, &excited_population, None, 0.0)?;
        let r = fit(&spec, &amplitudes, &excited_population, None, &init)?;
        r.converged.then(|| r.params[2])
    } else {
        None
    };
    Ok(Calibration {
        omega_peak,
        omega_untruncated,
        support_halfwidth: support,
        amplitudes,
        excited_population,
        fitted_center,
    })
}

pub fn cmd_calibrate(
    envelope_fwhm_ns: f64,
    angle_pi: f64,
    lifetime_ns: f64,
    points: usize,
    out: &Path,
) -> Result<(Calibration, PathBuf)> {
    let c = calibrate(envelope_fwhm_ns, angle_pi, lifetime_ns, points)?;
    println!("envelope_fwhm_ns = {envelope_fwhm_ns}");
    println!("rotation_angle_pi = {angle_pi}");
    println!("support_halfwidth_ns = {}", fmt_num(s_to_ns(c.support_halfwidth)));
    println!("omega_peak_rad_per_s = {}", fmt_num(c.omega_peak));
    println!("omega_peak_mhz = {}", fmt_num(rad_per_s_to_mhz(c.omega_peak)));
    println!("omega_untruncated_rad_per_s = {}", fmt_num(c.omega_untruncated));
    println!("truncation_correction = {}", fmt_num(c.truncation_correction()));
    match c.fitted_center {
        Some(f) => {
            println!("sweep_fit_center_rad_per_s = {}", fmt_num(f));
            println!("sweep_fit_relative_offset = {}", fmt_num(f / c.omega_peak - 1.0));
        }
        None => println!("sweep_fit_center_rad_per_s = none"),
    }
    let table = Table::new(
        &["omega_peak_rad_per_s", "excited_population"],
        vec![c.amplitudes.clone(), c.excited_population.clone()],
    );
    let path = write_file(out, &table.to_csv())?;
    Ok((c, path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pi_calibration_matches_sweep_peak() {
        let c = calibrate(1.6, 1.0, 1e9, 41).unwrap();
        assert!((c.omega_peak / 1.844e9 - 1.0).abs() < 5e-3, "{}", c.omega_peak);
        let center = c.fitted_center.unwrap();
        assert!((center / c.omega_peak - 1.0).abs() < 0.01, "{center} vs {}", c.omega_peak);
        // Decay during the pulse moves the population maximum to slightly
        // larger amplitudes.
        let damped = calibrate(1.6, 1.0, 12.3, 41).unwrap();
        let offset = damped.fitted_center.unwrap() / damped.omega_peak - 1.0;
        assert!(offset > 0.0 && offset < 0.02, "{offset}");
        assert!(c.truncation_correction() > 0.0 && c.truncation_correction() < 0.01);
        let half = calibrate(1.6, 0.5, 12.3, 11).unwrap();
        assert!((half.omega_peak / c.omega_peak - 0.5).abs() < 1e-12);
        assert!(calibrate(0.0, 1.0, 12.3, 11).is_err());
    }
}
