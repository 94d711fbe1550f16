//! Time-resolved fluorescence under the pulse train plus a weak probe laser,
//! and probe-frequency scans built from time-window averages of that signal.
//!
//! The emitter starts in |g⟩ at the sequence start (charge-state
//! re-initialization is taken as perfect). The collected signal is
//! ρ_ee(t)·e^{−(t − t₀)/T_dark}: phonon-sideband emission follows the excited
//! population, and slow pumping into a dark state appears as an exponential
//! envelope rather than a third level.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{evolve, Drive, TimeGrid};
use crate::error::{invalid, Error, Result};
use crate::params::{DetuningModel, EmitterParams};
use crate::pulse::PulseSequence;
use crate::state::DensityMatrix;

/// Default probe Rabi amplitude as a fraction of Γ.
pub const DEFAULT_PROBE_FRACTION: f64 = 0.02;
/// A probe is weak when its amplitude is below this fraction of the pulse peak.
pub const WEAK_PROBE_LIMIT: f64 = 0.1;
/// Probe phases averaged over to remove interference with the pulse train.
pub const PROBE_PHASES: [f64; 4] = [0.0, FRAC_PI_2, PI, 3.0 * FRAC_PI_2];

/// How the probe enters the carrier-frame Rabi frequency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeTone {
    /// Ω_p·e^{−i(δ_p t + φ₀)}: a laser at carrier + δ_p, one tone.
    #[default]
    SingleSideband,
    /// 2·Ω_p·cos(δ_p t + φ₀) in the pulse quadrature; also drives the mirror
    /// frequency −δ_p.
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeField {
    /// rad/s.
    pub rabi_amplitude: f64,
    /// Probe frequency minus pulse carrier, rad/s.
    pub detuning_from_carrier: f64,
    /// Seconds.
    pub turn_on_time: f64,
    #[serde(default)]
    pub tone: ProbeTone,
}

impl ProbeField {
    pub fn new(rabi_amplitude: f64, detuning_from_carrier: f64, turn_on_time: f64) -> Result<Self> {
        let p = Self { rabi_amplitude, detuning_from_carrier, turn_on_time, tone: ProbeTone::default() };
        p.validate()?;
        Ok(p)
    }

    /// Probe with the default amplitude 0.02·Γ.
    pub fn weak(params: &EmitterParams, turn_on_time: f64) -> Self {
        Self {
            rabi_amplitude: DEFAULT_PROBE_FRACTION * params.decay_rate,
            detuning_from_carrier: 0.0,
            turn_on_time,
            tone: ProbeTone::default(),
        }
    }

    pub fn off() -> Self {
        Self { rabi_amplitude: 0.0, detuning_from_carrier: 0.0, turn_on_time: 0.0, tone: ProbeTone::default() }
    }

    pub fn with_detuning(self, detuning_from_carrier: f64) -> Self {
        Self { detuning_from_carrier, ..self }
    }

    pub fn with_tone(self, tone: ProbeTone) -> Self {
        Self { tone, ..self }
    }

    pub fn is_off(&self) -> bool {
        self.rabi_amplitude == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rabi_amplitude >= 0.0) || !self.rabi_amplitude.is_finite() {
            return Err(invalid(format!("probe amplitude must be finite and >= 0, got {}", self.rabi_amplitude)));
        }
        if !self.detuning_from_carrier.is_finite() || !self.turn_on_time.is_finite() {
            return Err(invalid("probe detuning and turn-on time must be finite"));
        }
        Ok(())
    }

    pub fn is_weak_for(&self, seq: &PulseSequence) -> bool {
        self.rabi_amplitude < WEAK_PROBE_LIMIT * seq.peak_amplitude
    }

    fn value(&self, t: f64, phase: f64) -> C64 {
        let arg = self.detuning_from_carrier * t + phase;
        match self.tone {
            ProbeTone::SingleSideband => C64::from_polar(self.rabi_amplitude, -arg),
            ProbeTone::Cosine => C64::new(2.0 * self.rabi_amplitude * arg.cos(), 0.0),
        }
    }
}

/// Pulse train plus probe tone at a fixed phase φ₀.
#[derive(Debug, Clone, Copy)]
pub struct TwoToneDrive<'a> {
    pub seq: &'a PulseSequence,
    pub probe: ProbeField,
    pub phase: f64,
}

impl Drive for TwoToneDrive<'_> {
    fn rabi_on_segment(&self, t: f64, mid: f64) -> C64 {
        let pulses = self.seq.rabi_on_segment(t, mid);
        if self.probe.is_off() || mid < self.probe.turn_on_time {
            pulses
        } else {
            pulses + self.probe.value(t, self.phase)
        }
    }

    fn pulse_active(&self, a: f64, b: f64) -> bool {
        self.seq.pulse_active(a, b)
    }

    fn breakpoints(&self, a: f64, b: f64, out: &mut Vec<f64>) {
        let start = out.len();
        self.seq.breakpoints(a, b, out);
        let t_on = self.probe.turn_on_time;
        if !self.probe.is_off() && t_on > a && t_on < b {
            out.push(t_on);
            out[start..].sort_by(f64::total_cmp);
            let mut tail = out.split_off(start);
            tail.dedup();
            out.extend(tail);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowLabel {
    Controlled,
    Uncontrolled,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    /// Seconds.
    pub start: f64,
    /// Seconds.
    pub end: f64,
    pub label: WindowLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

impl WindowSpec {
    pub fn new(start: f64, end: f64, label: WindowLabel) -> Result<Self> {
        let w = Self { start, end, label, name: None };
        w.validate()?;
        Ok(w)
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.end > self.start) || !self.start.is_finite() || !self.end.is_finite() {
            return Err(invalid(format!("window needs end > start, got [{}, {}]", self.start, self.end)));
        }
        Ok(())
    }

    /// Name used for file names and reports.
    pub fn display_name(&self) -> String {
        match (&self.name, &self.label) {
            (Some(n), _) => n.clone(),
            (None, WindowLabel::Controlled) => "controlled".into(),
            (None, WindowLabel::Uncontrolled) => "uncontrolled".into(),
            (None, WindowLabel::Custom) => "custom".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub times: Vec<f64>,
    pub rho_ee: Vec<f64>,
    pub signal: Vec<f64>,
    /// False when the probe amplitude is not below 10% of the pulse peak.
    pub probe_is_weak: bool,
}

fn trace_for_phase(
    seq: &PulseSequence,
    probe: &ProbeField,
    phase: f64,
    delta: f64,
    params: &EmitterParams,
    grid: &TimeGrid,
) -> Result<Vec<f64>> {
    let drive = TwoToneDrive { seq, probe: *probe, phase };
    Ok(evolve(&DensityMatrix::ground(), grid, delta, &drive, params)?.populations())
}

/// Fluorescence signal for one static detuning, averaged over the probe
/// phases in [`PROBE_PHASES`] (a single run when the probe is off).
pub fn simulate_trace(
    seq: &PulseSequence,
    probe: &ProbeField,
    delta: f64,
    params: &EmitterParams,
    grid: &TimeGrid,
) -> Result<Trace> {
    seq.validate()?;
    probe.validate()?;
    params.validate()?;
    grid.validate_for(seq)?;
    let phases: &[f64] = if probe.is_off() { &[0.0] } else { &PROBE_PHASES };
    let mut rho_ee = vec![0.0; grid.points().len()];
    for &phase in phases {
        for (acc, v) in rho_ee.iter_mut().zip(trace_for_phase(seq, probe, phase, delta, params, grid)?) {
            *acc += v;
        }
    }
    let inv = 1.0 / phases.len() as f64;
    rho_ee.iter_mut().for_each(|v| *v *= inv);
    let times = grid.points();
    let signal = times
        .iter()
        .zip(&rho_ee)
        .map(|(t, p)| match params.dark_decay_time {
            Some(td) => p * (-(t - grid.t_start) / td).exp(),
            None => *p,
        })
        .collect();
    Ok(Trace { times, rho_ee, signal, probe_is_weak: probe.is_weak_for(seq) })
}

fn interpolate(times: &[f64], values: &[f64], t: f64) -> f64 {
    let i = times.partition_point(|&x| x <= t).clamp(1, times.len() - 1);
    let (t0, t1) = (times[i - 1], times[i]);
    let f = (t - t0) / (t1 - t0);
    values[i - 1] + f * (values[i] - values[i - 1])
}

/// Trapezoid mean of `values(times)` over `[start, end]`, with linear
/// interpolation at the window edges.
fn mean_over(times: &[f64], values: &[f64], start: f64, end: f64) -> f64 {
    let mut pts = vec![(start, interpolate(times, values, start))];
    let lo = times.partition_point(|&x| x <= start);
    let hi = times.partition_point(|&x| x < end);
    pts.extend((lo..hi).map(|i| (times[i], values[i])));
    pts.push((end, interpolate(times, values, end)));
    let area: f64 = pts.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum();
    area / (end - start)
}

/// Mean of the signal over the window.
pub fn window_average(trace: &Trace, window: &WindowSpec) -> Result<f64> {
    window.validate()?;
    let (Some(&t0), Some(&t1)) = (trace.times.first(), trace.times.last()) else {
        return Err(Error::Data("empty trace".into()));
    };
    let tol = 1e-9 * (t1 - t0).abs().max(f64::MIN_POSITIVE);
    if trace.times.len() < 2 || window.start < t0 - tol || window.end > t1 + tol {
        return Err(Error::Coverage { start: t0, end: t1, need_start: window.start, need_end: window.end });
    }
    Ok(mean_over(&trace.times, &trace.signal, window.start.max(t0), window.end.min(t1)))
}

/// Signal-versus-probe-frequency curve for one window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowCurve {
    pub window: WindowSpec,
    /// Ensemble-averaged window signal at each probe frequency.
    pub signal: Vec<f64>,
    /// Same window with the probe off.
    pub reference: f64,
    /// `signal − reference`, computed per realization before averaging.
    pub contrast: Vec<f64>,
    /// Standard error of `contrast` across Monte-Carlo realizations (zero for
    /// deterministic or quadrature ensembles).
    pub stderr: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeScan {
    /// Probe detuning from the pulse carrier, Hz.
    pub frequencies: Vec<f64>,
    pub curves: Vec<WindowCurve>,
    pub probe_is_weak: bool,
}

/// Scan the probe over `freqs_hz` and window-average the ensemble signal.
///
/// Each realization runs once with the probe off and once per frequency; the
/// per-realization difference is what the reported standard error describes.
/// Realizations and frequencies run in parallel and are reduced in index order.
pub fn probe_scan(
    seq: &PulseSequence,
    probe: &ProbeField,
    model: &DetuningModel,
    params: &EmitterParams,
    grid: &TimeGrid,
    freqs_hz: &[f64],
    windows: &[WindowSpec],
) -> Result<ProbeScan> {
    seq.validate()?;
    probe.validate()?;
    params.validate()?;
    grid.validate_for(seq)?;
    if windows.is_empty() {
        return Err(invalid("probe scan needs at least one window"));
    }
    for w in windows {
        w.validate()?;
        if w.start < grid.t_start || w.end > grid.t_end {
            return Err(Error::Coverage { start: grid.t_start, end: grid.t_end, need_start: w.start, need_end: w.end });
        }
    }
    if freqs_hz.iter().any(|f| !f.is_finite()) {
        return Err(invalid("probe frequencies must be finite"));
    }
    let realizations = model.realizations()?;
    let n_f = freqs_hz.len();
    let per = n_f + 1;
    let averages = |trace: &Trace| windows.iter().map(|w| window_average(trace, w)).collect::<Result<Vec<_>>>();

    // task r·(n_f+1) is the probe-off run of realization r, the rest are frequencies
    let results: Vec<Vec<f64>> = (0..realizations.len() * per)
        .into_par_iter()
        .map(|task| {
            let r = &realizations[task / per];
            let probe_here = match task % per {
                0 => ProbeField::off(),
                k => probe.with_detuning(crate::units::hz_to_rad_per_s(freqs_hz[k - 1])),
            };
            averages(&simulate_trace(seq, &probe_here, r.detuning, params, grid)?)
        })
        .collect::<Result<_>>()?;

    let sampled = model.is_sampled() && realizations.len() > 1;
    let n = realizations.len() as f64;
    let curves = windows
        .iter()
        .enumerate()
        .map(|(wi, w)| {
            let mut reference = 0.0;
            let mut signal = vec![0.0; n_f];
            let mut contrast = vec![0.0; n_f];
            for (ri, r) in realizations.iter().enumerate() {
                let off = results[ri * per][wi];
                reference += r.weight * off;
                for k in 0..n_f {
                    let on = results[ri * per + k + 1][wi];
                    signal[k] += r.weight * on;
                    contrast[k] += r.weight * (on - off);
                }
            }
            let stderr = if sampled {
                (0..n_f)
                    .map(|k| {
                        let ss: f64 = (0..realizations.len())
                            .map(|ri| {
                                let d = results[ri * per + k + 1][wi] - results[ri * per][wi];
                                (d - contrast[k]).powi(2)
                            })
                            .sum();
                        (ss / (n - 1.0)).sqrt() / n.sqrt()
                    })
                    .collect()
            } else {
                vec![0.0; n_f]
            };
            WindowCurve { window: w.clone(), signal, reference, contrast, stderr }
        })
        .collect();
    Ok(ProbeScan { frequencies: freqs_hz.to_vec(), curves, probe_is_weak: probe.is_weak_for(seq) })
}

/// A ready-to-run trace experiment: sequence, probe, time grid and windows.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSetup {
    pub seq: PulseSequence,
    pub probe: ProbeField,
    pub grid: TimeGrid,
    pub windows: Vec<WindowSpec>,
}

/// Length of the uncontrolled window after the train, in lifetimes.
pub const UNCONTROLLED_WINDOW_LIFETIMES: f64 = 8.0;

/// Sequence starting at t = 0 with the leading edge of its first pulse.
fn train_from_zero(n: usize, tau: f64, fwhm: f64) -> Result<PulseSequence> {
    let seq = PulseSequence::calibrated(n, tau, fwhm, PI)?;
    let hw = seq.support_halfwidth;
    Ok(seq.with_first_center(hw))
}

/// Main experiment: N = 21 π-pulses, τ = 10 ns, 1.6 ns FWHM, the probe switched
/// on right after the 11th pulse. The controlled window runs from probe
/// turn-on to the end of the last pulse; the uncontrolled window covers the
/// following [`UNCONTROLLED_WINDOW_LIFETIMES`] lifetimes.
pub fn main_experiment(params: &EmitterParams) -> Result<TraceSetup> {
    let seq = train_from_zero(21, 10e-9, 1.6e-9)?;
    let hw = seq.support_halfwidth;
    let t_on = seq.center(10) + hw;
    let t_train_end = seq.last_center() + hw;
    let t_end = t_train_end + UNCONTROLLED_WINDOW_LIFETIMES / params.decay_rate;
    let windows = vec![
        WindowSpec::new(t_on, t_train_end, WindowLabel::Controlled)?,
        WindowSpec::new(t_train_end, t_end, WindowLabel::Uncontrolled)?,
    ];
    let grid = TimeGrid::for_sequence(0.0, t_end, &seq)?;
    Ok(TraceSetup { seq, probe: ProbeField::weak(params, t_on), grid, windows })
}

/// Temporal-onset experiment: N = 5 π-pulses, τ = 10 ns, probe on from the
/// start. Window k (k = 1..4) runs from the center of pulse 1 to the center of
/// pulse k+1, i.e. it covers the first k interpulse intervals.
pub fn onset_experiment(params: &EmitterParams) -> Result<TraceSetup> {
    let seq = train_from_zero(5, 10e-9, 1.6e-9)?;
    let windows = (1..=4)
        .map(|k| {
            WindowSpec::new(seq.center(0), seq.center(k), WindowLabel::Custom)
                .map(|w| w.named(format!("intervals_{k}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let t_end = seq.last_center() + seq.support_halfwidth;
    let grid = TimeGrid::for_sequence(0.0, t_end, &seq)?;
    Ok(TraceSetup { seq, probe: ProbeField::weak(params, 0.0), grid, windows })
}

#[cfg(test)]
mod tests {
    use super::*;

    const NS: f64 = 1e-9;

    fn params() -> EmitterParams {
        EmitterParams::from_lifetime(12.3 * NS).unwrap()
    }

    fn constant_trace(c: f64) -> Trace {
        let times: Vec<f64> = (0..=100).map(|i| i as f64 * NS).collect();
        let n = times.len();
        Trace { times, rho_ee: vec![c; n], signal: vec![c; n], probe_is_weak: true }
    }

    #[test]
    fn window_average_of_constant() {
        let t = constant_trace(0.37);
        let w = WindowSpec::new(3.3 * NS, 71.9 * NS, WindowLabel::Custom).unwrap();
        assert!((window_average(&t, &w).unwrap() - 0.37).abs() < 1e-15);
        assert!(window_average(&t, &WindowSpec::new(50.0 * NS, 120.0 * NS, WindowLabel::Custom).unwrap()).is_err());
        assert!(WindowSpec::new(5.0, 5.0, WindowLabel::Custom).is_err());
    }

    #[test]
    fn window_average_of_periodic_signal() {
        let times: Vec<f64> = (0..=2000).map(|i| i as f64 * 0.05 * NS).collect();
        let period = 10.0 * NS;
        let signal: Vec<f64> = times.iter().map(|t| 0.5 + 0.3 * (std::f64::consts::TAU * t / period).sin()).collect();
        let trace = Trace { times, rho_ee: signal.clone(), signal, probe_is_weak: true };
        let a = window_average(&trace, &WindowSpec::new(13.0 * NS, 23.0 * NS, WindowLabel::Custom).unwrap()).unwrap();
        let b = window_average(&trace, &WindowSpec::new(53.0 * NS, 63.0 * NS, WindowLabel::Custom).unwrap()).unwrap();
        assert!((a - 0.5).abs() < 1e-4);
        assert!((a - b).abs() < 1e-12);
    }

    /// A single-sideband probe at detuning δ drives an emitter at Δ = δ
    /// resonantly and one at Δ = −δ far off resonance.
    #[test]
    fn single_sideband_sign() {
        let p = params();
        let seq = PulseSequence::calibrated(1, 10.0 * NS, 1.6 * NS, PI).unwrap().with_first_center(-1e-6);
        let probe = ProbeField::new(0.5 * p.decay_rate, std::f64::consts::TAU * 80e6, 0.0).unwrap();
        let grid = TimeGrid::new(0.0, 100.0 * NS, 0.05 * NS, 0.04 * NS).unwrap();
        let on = simulate_trace(&seq, &probe, probe.detuning_from_carrier, &p, &grid).unwrap();
        let mirror = simulate_trace(&seq, &probe, -probe.detuning_from_carrier, &p, &grid).unwrap();
        let last = |t: &Trace| *t.rho_ee.last().unwrap();
        assert!(last(&on) > 20.0 * last(&mirror), "{} vs {}", last(&on), last(&mirror));
        // steady state of a resonantly driven two-level system: s/(2(1+s)) with s = 2Ω²/Γ²
        let s = 2.0 * 0.25;
        assert!((last(&on) - s / (2.0 * (1.0 + s))).abs() < 1e-3);
        // the cosine tone drives both sidebands
        let cos = probe.with_tone(ProbeTone::Cosine);
        let a = simulate_trace(&seq, &cos, probe.detuning_from_carrier, &p, &grid).unwrap();
        let b = simulate_trace(&seq, &cos, -probe.detuning_from_carrier, &p, &grid).unwrap();
        assert!((last(&a) - last(&b)).abs() < 0.05 * last(&a));
    }

    #[test]
    fn dark_decay_envelope() {
        let p = params().with_dark_decay(662.0 * NS).unwrap();
        let setup = onset_experiment(&p).unwrap();
        let t = simulate_trace(&setup.seq, &ProbeField::off(), 0.0, &p, &setup.grid).unwrap();
        for i in (0..t.times.len()).step_by(97) {
            let want = t.rho_ee[i] * (-t.times[i] / 662e-9).exp();
            assert!((t.signal[i] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn strong_probe_is_flagged() {
        let p = params();
        let setup = onset_experiment(&p).unwrap();
        let strong = ProbeField::new(0.5 * setup.seq.peak_amplitude, 0.0, 0.0).unwrap();
        let t = simulate_trace(&setup.seq, &strong, 0.0, &p, &setup.grid).unwrap();
        assert!(!t.probe_is_weak);
        assert!(setup.probe.is_weak_for(&setup.seq));
    }

    #[test]
    fn presets_are_consistent() {
        let p = params();
        let main = main_experiment(&p).unwrap();
        assert_eq!(main.seq.n_pulses, 21);
        assert!(main.windows.iter().all(|w| w.end <= main.grid.t_end + 1e-18));
        assert!((main.probe.turn_on_time - (main.seq.center(10) + main.seq.support_halfwidth)).abs() < 1e-18);
        let onset = onset_experiment(&p).unwrap();
        assert_eq!(onset.windows.len(), 4);
        assert!((onset.windows[1].end - onset.windows[1].start - 20.0 * NS).abs() < 1e-15);
    }
}
