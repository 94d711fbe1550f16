//! Unit conventions.
//!
//! Everything inside the crate runs on angular frequency (rad/s) and seconds.
//! MHz, Hz and ns only appear at the file and command-line boundary, and the
//! helpers here are the only place those conversions happen.

use std::f64::consts::{PI, TAU};

use crate::error::{invalid, Result};

/// 2·sqrt(2·ln 2): ratio between the FWHM and the standard deviation of a Gaussian.
pub const GAUSSIAN_FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

const MHZ_TO_RAD_PER_S: f64 = TAU * 1e6;
const NS_TO_S: f64 = 1e-9;

#[inline]
pub fn mhz_to_rad_per_s(mhz: f64) -> f64 {
    mhz * MHZ_TO_RAD_PER_S
}

#[inline]
pub fn rad_per_s_to_mhz(omega: f64) -> f64 {
    omega / MHZ_TO_RAD_PER_S
}

#[inline]
pub fn hz_to_rad_per_s(hz: f64) -> f64 {
    hz * TAU
}

#[inline]
pub fn rad_per_s_to_hz(omega: f64) -> f64 {
    omega / TAU
}

#[inline]
pub fn ns_to_s(ns: f64) -> f64 {
    ns * NS_TO_S
}

#[inline]
pub fn s_to_ns(s: f64) -> f64 {
    s / NS_TO_S
}

/// Standard deviation of a Gaussian with the given full width at half maximum.
/// Works in whatever unit the width is given in.
pub fn fwhm_to_sigma(fwhm: f64) -> Result<f64> {
    if !(fwhm >= 0.0) {
        return Err(invalid(format!("FWHM must be non-negative, got {fwhm}")));
    }
    Ok(fwhm / GAUSSIAN_FWHM_PER_SIGMA)
}

pub fn sigma_to_fwhm(sigma: f64) -> f64 {
    sigma * GAUSSIAN_FWHM_PER_SIGMA
}

/// FWHM in Hz of the natural (lifetime-limited) Lorentzian line for a decay
/// rate `gamma` in 1/s.
pub fn lifetime_limit_fwhm(gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(invalid(format!("decay rate must be positive, got {gamma}")));
    }
    Ok(gamma / (2.0 * PI))
}
