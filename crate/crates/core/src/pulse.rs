//! Truncated-Gaussian π-pulse trains in the carrier rotating frame.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::units::GAUSSIAN_FWHM_PER_SIGMA;

/// Default truncation of the Gaussian envelope, in units of its standard deviation.
pub const DEFAULT_SUPPORT_SIGMAS: f64 = 3.0;

/// Periodic train of Gaussian pulses. Pulse `k` (0-based) is centered at
/// `first_center + k * interpulse_delay` and is zero outside
/// `±support_halfwidth` of its center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    pub n_pulses: usize,
    /// τ, seconds.
    pub interpulse_delay: f64,
    /// Envelope FWHM, seconds.
    pub envelope_fwhm: f64,
    /// Ω_peak, rad/s.
    pub peak_amplitude: f64,
    /// Target rotation angle per pulse, radians.
    pub rotation_angle: f64,
    /// Half width of the envelope support, seconds. `f64::INFINITY` disables truncation.
    pub support_halfwidth: f64,
    /// Center of pulse 0, seconds.
    #[serde(default)]
    pub first_center: f64,
}

impl PulseSequence {
    /// A train whose peak amplitude is calibrated so that each truncated pulse
    /// has area `rotation_angle`. The support is ±3σ of the envelope.
    pub fn calibrated(n_pulses: usize, interpulse_delay: f64, envelope_fwhm: f64, rotation_angle: f64) -> Result<Self> {
        if !(envelope_fwhm > 0.0) {
            return Err(invalid(format!("envelope FWHM must be positive, got {envelope_fwhm}")));
        }
        let support_halfwidth = DEFAULT_SUPPORT_SIGMAS * envelope_fwhm / GAUSSIAN_FWHM_PER_SIGMA;
        let peak_amplitude = calibrate_pulse_amplitude(envelope_fwhm, rotation_angle, support_halfwidth)?;
        let seq = Self {
            n_pulses,
            interpulse_delay,
            envelope_fwhm,
            peak_amplitude,
            rotation_angle,
            support_halfwidth,
            first_center: 0.0,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn with_first_center(mut self, t: f64) -> Self {
        self.first_center = t;
        self
    }

    /// Change the truncation and recalibrate the amplitude.
    pub fn with_support_halfwidth(mut self, halfwidth: f64) -> Result<Self> {
        self.peak_amplitude = calibrate_pulse_amplitude(self.envelope_fwhm, self.rotation_angle, halfwidth)?;
        self.support_halfwidth = halfwidth;
        self.validate()?;
        Ok(self)
    }

    /// Change the target angle and recalibrate the amplitude.
    pub fn with_rotation_angle(mut self, angle: f64) -> Result<Self> {
        self.peak_amplitude = calibrate_pulse_amplitude(self.envelope_fwhm, angle, self.support_halfwidth)?;
        self.rotation_angle = angle;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_pulses == 0 {
            return Err(invalid("a pulse sequence needs at least one pulse"));
        }
        if !(self.envelope_fwhm > 0.0) || !(self.support_halfwidth > 0.0) {
            return Err(invalid("envelope FWHM and support half width must be positive"));
        }
        if !(self.peak_amplitude >= 0.0) || !self.peak_amplitude.is_finite() {
            return Err(invalid(format!("peak amplitude must be finite and >= 0, got {}", self.peak_amplitude)));
        }
        if !self.first_center.is_finite() {
            return Err(invalid("first pulse center must be finite"));
        }
        if self.n_pulses > 1 && !(self.interpulse_delay > 2.0 * self.support_halfwidth) {
            return Err(invalid(format!(
                "interpulse delay {:e} s must exceed the pulse support width {:e} s",
                self.interpulse_delay,
                2.0 * self.support_halfwidth
            )));
        }
        Ok(())
    }

    /// Standard deviation of the Gaussian envelope, seconds.
    pub fn sigma_t(&self) -> f64 {
        self.envelope_fwhm / GAUSSIAN_FWHM_PER_SIGMA
    }

    pub fn center(&self, k: usize) -> f64 {
        self.first_center + k as f64 * self.interpulse_delay
    }

    pub fn last_center(&self) -> f64 {
        self.center(self.n_pulses - 1)
    }

    /// Index of the pulse whose support contains `t`, if any.
    pub fn pulse_at(&self, t: f64) -> Option<usize> {
        let k = if self.n_pulses == 1 { 0.0 } else { ((t - self.first_center) / self.interpulse_delay).round() };
        if k < 0.0 || k >= self.n_pulses as f64 {
            return None;
        }
        let k = k as usize;
        ((t - self.center(k)).abs() <= self.support_halfwidth).then_some(k)
    }

    /// Ω_x(t) in rad/s.
    pub fn envelope(&self, t: f64) -> f64 {
        match self.pulse_at(t) {
            Some(k) => {
                let x = (t - self.center(k)) / self.sigma_t();
                self.peak_amplitude * (-0.5 * x * x).exp()
            }
            None => 0.0,
        }
    }

    /// Closed-form area of one truncated pulse, radians.
    pub fn pulse_area(&self) -> f64 {
        truncated_gaussian_area(self.sigma_t(), self.support_halfwidth) * self.peak_amplitude
    }
}

/// Ω_x(t) of the train; free-function form of [`PulseSequence::envelope`].
pub fn pulse_envelope(t: f64, seq: &PulseSequence) -> f64 {
    seq.envelope(t)
}

/// ∫ exp(−x²/2σ²) dx over [−h, h].
fn truncated_gaussian_area(sigma: f64, halfwidth: f64) -> f64 {
    let full = sigma * (2.0 * PI).sqrt();
    if halfwidth.is_infinite() {
        full
    } else {
        full * libm::erf(halfwidth / (sigma * SQRT_2))
    }
}

/// Peak Rabi amplitude (rad/s) that gives one truncated Gaussian pulse the
/// area `rotation_angle`.
pub fn calibrate_pulse_amplitude(envelope_fwhm: f64, rotation_angle: f64, support_halfwidth: f64) -> Result<f64> {
    if !(envelope_fwhm > 0.0) || !envelope_fwhm.is_finite() {
        return Err(invalid(format!("envelope FWHM must be positive, got {envelope_fwhm}")));
    }
    if !(rotation_angle > 0.0) || !rotation_angle.is_finite() {
        return Err(invalid(format!("rotation angle must be positive, got {rotation_angle}")));
    }
    if !(support_halfwidth > 0.0) {
        return Err(invalid(format!("support half width must be positive, got {support_halfwidth}")));
    }
    let sigma = envelope_fwhm / GAUSSIAN_FWHM_PER_SIGMA;
    Ok(rotation_angle / truncated_gaussian_area(sigma, support_halfwidth))
}
