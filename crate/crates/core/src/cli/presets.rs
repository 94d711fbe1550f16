//! Named run configurations.

use super::config::*;
use crate::error::{Error, Result};
use crate::params::EmitterParams;
use crate::spectra::FREE_DECAY_LIFETIMES;
use crate::tracemodel::{main_experiment, onset_experiment, TraceSetup};
use crate::units::s_to_ns;

/// NV excited-state lifetime.
pub const LIFETIME_NS: f64 = 12.3;
/// Pulse envelope FWHM used throughout.
pub const PULSE_FWHM_NS: f64 = 1.6;
/// Uncontrolled linewidth of the measured emitter.
pub const MEASURED_FWHM_MHZ: f64 = 104.0;

/// Axis a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepAxis {
    Tau,
    Delta0,
    NPulses,
    Angle,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Tau => "tau_ns",
            SweepAxis::Delta0 => "delta0_mhz",
            SweepAxis::NPulses => "n_pulses",
            SweepAxis::Angle => "angle_pi",
        }
    }

    /// Copy of `config` with this axis set to `value`.
    pub fn apply(self, config: &RunConfig, value: f64) -> Result<RunConfig> {
        let mut c = config.clone();
        match self {
            SweepAxis::Tau => c.pulses.interpulse_delay_ns = value,
            SweepAxis::Delta0 => c.ensemble.center_mhz = value,
            SweepAxis::Angle => c.pulses.rotation_angle_pi = value,
            SweepAxis::NPulses => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(Error::Config(format!("n_pulses must be a positive integer, got {value}")));
                }
                c.pulses.n_pulses = value as usize;
            }
        }
        Ok(c)
    }
}

pub struct Preset {
    pub name: &'static str,
    pub about: &'static str,
}

pub const PRESETS: &[Preset] = &[
    Preset { name: "narrow", about: "spectra after N = 12 π-pulses, 30 MHz ensemble, τ = 5 ns" },
    Preset { name: "narrow_detuned", about: "narrow swept over Δ₀ = 0, 10, 20, 30 MHz" },
    Preset { name: "wide", about: "spectra for a 107 MHz ensemble, τ = 5 ns" },
    Preset { name: "probe", about: "probe scan of the 21-pulse experiment, controlled and uncontrolled windows" },
    Preset { name: "tau_sweep", about: "104 MHz ensemble swept over τ = 7, 10, 14 ns" },
    Preset { name: "offset_sweep", about: "104 MHz ensemble with Δ₀ = −5 and +8 natural linewidths" },
    Preset { name: "onset", about: "probe scan of a 5-pulse train, windows over the first 1..4 intervals" },
    Preset { name: "probe_half_angle", about: "the probe scan with π/2 pulses" },
    Preset { name: "half_angle", about: "narrow swept over rotation angles π and π/2" },
    Preset { name: "free_decay", about: "single emitter, no control pulses: the natural Lorentzian" },
];

fn spectrum_base(stem: &str, tau_ns: f64, fwhm_mhz: f64) -> RunConfig {
    RunConfig {
        emitter: EmitterConfig { lifetime_ns: LIFETIME_NS, dark_decay_ns: None },
        pulses: PulseConfig {
            n_pulses: 12,
            interpulse_delay_ns: tau_ns,
            envelope_fwhm_ns: PULSE_FWHM_NS,
            rotation_angle_pi: 1.0,
            first_center_ns: None,
            support_halfwidth_ns: None,
        },
        ensemble: EnsembleConfig { center_mhz: 0.0, fwhm_mhz, sampling: SamplingKind::MonteCarlo, size: 200, seed: 1 },
        grid: GridConfig::default(),
        frequencies: FrequencyConfig::default(),
        probe: None,
        output: OutputConfig { stem: stem.into(), ..OutputConfig::default() },
        windows: Vec::new(),
    }
}

fn trace_base(stem: &str, setup: &TraceSetup) -> RunConfig {
    let mut c = spectrum_base(stem, s_to_ns(setup.seq.interpulse_delay), MEASURED_FWHM_MHZ);
    c.pulses.n_pulses = setup.seq.n_pulses;
    c.pulses.first_center_ns = Some(s_to_ns(setup.seq.first_center));
    c.probe = Some(ProbeConfig { turn_on_ns: s_to_ns(setup.probe.turn_on_time), ..ProbeConfig::default() });
    c.frequencies = FrequencyConfig { center_mhz: 0.0, half_span_mhz: Some(150.0), points: 61 };
    c.grid.trace_end_ns = Some(s_to_ns(setup.grid.t_end));
    c.windows = windows_to_config(&setup.windows);
    c
}

/// Configuration for a named preset.
pub fn preset(name: &str) -> Result<RunConfig> {
    let params = EmitterParams::from_lifetime(LIFETIME_NS * 1e-9)?;
    Ok(match name {
        "narrow" | "narrow_detuned" | "half_angle" => spectrum_base(name, 5.0, 30.0),
        "wide" => spectrum_base(name, 5.0, 107.0),
        "tau_sweep" | "offset_sweep" => spectrum_base(name, 10.0, MEASURED_FWHM_MHZ),
        "probe" => trace_base(name, &main_experiment(&params)?),
        "probe_half_angle" => {
            let mut c = trace_base(name, &main_experiment(&params)?);
            c.pulses.rotation_angle_pi = 0.5;
            c
        }
        "onset" => trace_base(name, &onset_experiment(&params)?),
        "free_decay" => {
            let mut c = spectrum_base(name, 10.0, 0.0);
            c.pulses.n_pulses = 1;
            c.ensemble.size = 1;
            c.grid.horizon_ns = Some(FREE_DECAY_LIFETIMES * LIFETIME_NS);
            c.grid.step_ns = Some(1.0);
            c.frequencies = FrequencyConfig { center_mhz: 0.0, half_span_mhz: Some(60.0), points: 241 };
            c
        }
        _ => {
            let known: Vec<&str> = PRESETS.iter().map(|p| p.name).collect();
            return Err(Error::Config(format!("unknown preset '{name}' (known: {})", known.join(", "))));
        }
    })
}

/// Sweep axis and values a preset implies, if any.
pub fn preset_sweep(name: &str) -> Option<(SweepAxis, Vec<f64>)> {
    let natural = 1e3 / (2.0 * std::f64::consts::PI * LIFETIME_NS);
    match name {
        "narrow_detuned" => Some((SweepAxis::Delta0, vec![0.0, 10.0, 20.0, 30.0])),
        "tau_sweep" => Some((SweepAxis::Tau, vec![7.0, 10.0, 14.0])),
        "offset_sweep" => Some((SweepAxis::Delta0, vec![-5.0 * natural, 8.0 * natural])),
        "half_angle" => Some((SweepAxis::Angle, vec![1.0, 0.5])),
        _ => None,
    }
}
