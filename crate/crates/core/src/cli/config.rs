//! Run configuration file. Frequencies are in MHz and times in ns; everything
//! is converted to rad/s and seconds when the file is resolved.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::TimeGrid;
use crate::error::{Error, Result};
use crate::params::{DetuningModel, EmitterParams};
use crate::pulse::PulseSequence;
use crate::spectra::{linspace, CorrelatorGrid};
use crate::tracemodel::{ProbeField, ProbeTone, WindowLabel, WindowSpec, DEFAULT_PROBE_FRACTION};
use crate::units::{fwhm_to_sigma, mhz_to_rad_per_s, ns_to_s, s_to_ns};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub emitter: EmitterConfig,
    pub pulses: PulseConfig,
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub frequencies: FrequencyConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<ProbeConfig>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub windows: Vec<WindowConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitterConfig {
    pub lifetime_ns: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dark_decay_ns: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseConfig {
    pub n_pulses: usize,
    pub interpulse_delay_ns: f64,
    pub envelope_fwhm_ns: f64,
    /// Rotation angle per pulse in units of π.
    #[serde(default = "one")]
    pub rotation_angle_pi: f64,
    /// Center of pulse 0. Spectra default to 0 (the excited-state preparation
    /// stands in for pulse 0); traces default to the support half width.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_center_ns: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support_halfwidth_ns: Option<f64>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SamplingKind {
    MonteCarlo,
    GaussHermite,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    /// Mean detuning Δ₀ of the emitter from the pulse carrier.
    #[serde(default)]
    pub center_mhz: f64,
    /// FWHM of the uncontrolled Gaussian line; 0 gives a single emitter.
    pub fwhm_mhz: f64,
    pub sampling: SamplingKind,
    /// Realizations (Monte-Carlo), order (Gauss–Hermite) or nodes (uniform).
    pub size: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon_ns: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_ns: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_max_ns: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_start_ns: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_step_ns: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulse_substep_ns: Option<f64>,
    /// End of the simulated fluorescence trace; defaults to the latest window end.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_end_ns: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequencyConfig {
    #[serde(default)]
    pub center_mhz: f64,
    /// Half span; defaults to 1.5/τ.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_span_mhz: Option<f64>,
    #[serde(default = "default_points")]
    pub points: usize,
}

fn default_points() -> usize {
    401
}

impl Default for FrequencyConfig {
    fn default() -> Self {
        Self { center_mhz: 0.0, half_span_mhz: None, points: default_points() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    /// Probe Rabi amplitude in units of Γ.
    #[serde(default = "default_probe_fraction")]
    pub rabi_fraction: f64,
    #[serde(default)]
    pub turn_on_ns: f64,
    /// Probe detuning used for the single trace output.
    #[serde(default)]
    pub detuning_mhz: f64,
    #[serde(default)]
    pub tone: ProbeTone,
}

fn default_probe_fraction() -> f64 {
    DEFAULT_PROBE_FRACTION
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { rabi_fraction: DEFAULT_PROBE_FRACTION, turn_on_ns: 0.0, detuning_mhz: 0.0, tone: ProbeTone::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub start_ns: f64,
    pub end_ns: f64,
    pub label: WindowLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: String,
    #[serde(default = "default_stem")]
    pub stem: String,
    #[serde(default)]
    pub svg: bool,
}

fn default_dir() -> String {
    "out".into()
}

fn default_stem() -> String {
    "run".into()
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_dir(), stem: default_stem(), svg: false }
    }
}

/// A configuration converted to simulator units and validated.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub params: EmitterParams,
    /// Train for spectra (pulse 0 at `first_center_ns`, default 0).
    pub seq: PulseSequence,
    pub model: DetuningModel,
    pub grid: CorrelatorGrid,
    pub freqs_hz: Vec<f64>,
    /// Present when the config has windows.
    pub trace: Option<ResolvedTrace>,
}

#[derive(Debug, Clone)]
pub struct ResolvedTrace {
    pub seq: PulseSequence,
    pub probe: ProbeField,
    pub probe_detuning: f64,
    pub grid: TimeGrid,
    pub windows: Vec<WindowSpec>,
}

fn cfg_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(cfg_err)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(cfg_err)
    }

    fn sequence(&self, default_first_center: impl Fn(&PulseSequence) -> f64) -> Result<PulseSequence> {
        let p = &self.pulses;
        let mut seq = PulseSequence::calibrated(
            p.n_pulses,
            ns_to_s(p.interpulse_delay_ns),
            ns_to_s(p.envelope_fwhm_ns),
            p.rotation_angle_pi * std::f64::consts::PI,
        )?;
        if let Some(hw) = p.support_halfwidth_ns {
            seq = seq.with_support_halfwidth(ns_to_s(hw))?;
        }
        let first = p.first_center_ns.map(ns_to_s).unwrap_or_else(|| default_first_center(&seq));
        let seq = seq.with_first_center(first);
        seq.validate()?;
        Ok(seq)
    }

    fn detuning_model(&self) -> Result<DetuningModel> {
        let e = &self.ensemble;
        let mean = mhz_to_rad_per_s(e.center_mhz);
        let sigma = mhz_to_rad_per_s(fwhm_to_sigma(e.fwhm_mhz)?);
        let m = match e.sampling {
            SamplingKind::MonteCarlo => DetuningModel::monte_carlo(mean, sigma, e.size, e.seed),
            SamplingKind::GaussHermite => DetuningModel::gauss_hermite(mean, sigma, e.size),
            SamplingKind::Uniform => DetuningModel::uniform(mean, sigma, e.size),
        };
        m.validate()?;
        Ok(m)
    }

    /// Frequency list in Hz.
    pub fn frequencies_hz(&self) -> Result<Vec<f64>> {
        let f = &self.frequencies;
        let half = f.half_span_mhz.unwrap_or(1.5e3 / self.pulses.interpulse_delay_ns);
        if !(half > 0.0) || !f.center_mhz.is_finite() || f.points < 2 {
            return Err(cfg_err("frequencies need half_span_mhz > 0 and at least 2 points"));
        }
        Ok(linspace((f.center_mhz - half) * 1e6, (f.center_mhz + half) * 1e6, f.points))
    }

    fn correlator_grid(&self, seq: &PulseSequence, freqs: &[f64]) -> Result<CorrelatorGrid> {
        let g = &self.grid;
        let mut grid = CorrelatorGrid::for_sequence(seq);
        if let Some(h) = g.horizon_ns {
            grid.horizon = ns_to_s(h);
            grid.theta_max = grid.horizon;
        }
        if let Some(v) = g.step_ns {
            grid.step = ns_to_s(v);
        }
        if let Some(v) = g.theta_max_ns {
            grid.theta_max = ns_to_s(v);
        }
        if let Some(v) = g.window_start_ns {
            grid.window_start = ns_to_s(v);
        }
        if let Some(v) = g.base_step_ns {
            grid.base_step = ns_to_s(v);
        }
        grid.pulse_substep = g.pulse_substep_ns.map(ns_to_s).unwrap_or(grid.pulse_substep).min(grid.base_step);
        grid.validate_for(freqs)?;
        Ok(grid)
    }

    fn trace_setup(&self, params: &EmitterParams) -> Result<Option<ResolvedTrace>> {
        if self.windows.is_empty() {
            return Ok(None);
        }
        let seq = self.sequence(|s| s.support_halfwidth)?;
        let windows = self
            .windows
            .iter()
            .map(|w| {
                let spec = WindowSpec::new(ns_to_s(w.start_ns), ns_to_s(w.end_ns), w.label.clone())?;
                Ok(match &w.name {
                    Some(n) => spec.named(n.clone()),
                    None => spec,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let latest = windows.iter().fold(0.0f64, |m, w| m.max(w.end));
        let t_end = self.grid.trace_end_ns.map(ns_to_s).unwrap_or(latest);
        let mut grid = TimeGrid::for_sequence(0.0, t_end, &seq)?;
        if let Some(v) = self.grid.base_step_ns {
            grid.base_step = ns_to_s(v);
        }
        if let Some(v) = self.grid.pulse_substep_ns {
            grid.pulse_substep = ns_to_s(v);
        }
        grid.pulse_substep = grid.pulse_substep.min(grid.base_step);
        grid.validate_for(&seq)?;
        let pc = self.probe.clone().unwrap_or_default();
        let probe =
            ProbeField::new(pc.rabi_fraction * params.decay_rate, 0.0, ns_to_s(pc.turn_on_ns))?.with_tone(pc.tone);
        Ok(Some(ResolvedTrace { seq, probe, probe_detuning: mhz_to_rad_per_s(pc.detuning_mhz), grid, windows }))
    }

    /// Convert to simulator units and check every module invariant.
    pub fn resolve(&self) -> Result<Resolved> {
        let inner = || -> Result<Resolved> {
            let mut params = EmitterParams::from_lifetime(ns_to_s(self.emitter.lifetime_ns))?;
            if let Some(t) = self.emitter.dark_decay_ns {
                params = params.with_dark_decay(ns_to_s(t))?;
            }
            let seq = self.sequence(|_| 0.0)?;
            let model = self.detuning_model()?;
            let freqs_hz = self.frequencies_hz()?;
            let grid = self.correlator_grid(&seq, &freqs_hz)?;
            let trace = self.trace_setup(&params)?;
            Ok(Resolved { params, seq, model, grid, freqs_hz, trace })
        };
        inner().map_err(|e| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        })
    }
}

/// Window list in config units.
pub fn windows_to_config(windows: &[WindowSpec]) -> Vec<WindowConfig> {
    windows
        .iter()
        .map(|w| WindowConfig {
            start_ns: s_to_ns(w.start),
            end_ns: s_to_ns(w.end),
            label: w.label.clone(),
            name: w.name.clone(),
        })
        .collect()
}
