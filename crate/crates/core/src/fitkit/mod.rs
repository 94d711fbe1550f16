//! Peak and decay models plus a Levenberg–Marquardt least-squares engine.
//!
//! Parameter layouts (x in whatever unit the data uses):
//!
//! | kind              | parameters                                   |
//! |-------------------|----------------------------------------------|
//! | `lorentzian_sum(n)` | baseline, then (amplitude, center, fwhm) × n |
//! | `pseudo_voigt`    | baseline, amplitude, center, fwhm, eta       |
//! | `gaussian`        | baseline, amplitude, center, fwhm            |
//! | `exponential`     | baseline, amplitude, time constant           |
//! | `bi_exponential`  | baseline, a1, t1, a2, t2                     |
//! | `trace_model`     | scale, dark decay time                       |
//!
//! Amplitudes are signed, so dips are ordinary components.

mod features;
mod lm;
mod report;

use std::f64::consts::LN_2;
use std::fmt;
use std::str::FromStr;

pub use features::{
    carrier_feature, dip_depth, initial_guess, interpolate, peak_magnitude, satellite_fit, CarrierFeature,
    MIN_WINDOW_POINTS,
};
pub use lm::{fit, fit_with, jacobian, FitOptions, FitResult};
pub use report::{extract_satellites, linewidth_report, lorentzian_sum_init, satellite_spacing, Linewidth, Satellite};

use crate::error::{invalid, Error, Result};

/// Largest supported number of Lorentzian components.
pub const MAX_LORENTZIANS: usize = 9;

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    LorentzianSum(usize),
    PseudoVoigt,
    Gaussian,
    Exponential,
    BiExponential,
    /// `scale · base(x) · exp(−x / t_dark)`, with `base` a sampled curve
    /// (typically a simulated excited-state population) interpolated linearly.
    TraceModel {
        times: Vec<f64>,
        base: Vec<f64>,
    },
}

/// Constraint class of a parameter; decides its internal transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Free,
    /// Strictly positive (widths, time constants), optimized in log space.
    Positive,
    /// Confined to [0, 1] (pseudo-Voigt mixing), optimized through a logistic.
    Fraction,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::LorentzianSum(n) if *n == 0 || *n > MAX_LORENTZIANS => {
                Err(invalid(format!("lorentzian_sum needs 1..={MAX_LORENTZIANS} components, got {n}")))
            }
            ModelSpec::TraceModel { times, base } => {
                if times.len() != base.len() || times.len() < 2 {
                    return Err(invalid("trace model needs at least two samples of equal length"));
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(invalid("trace model times must increase strictly"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            ModelSpec::LorentzianSum(n) => 1 + 3 * n,
            ModelSpec::PseudoVoigt => 5,
            ModelSpec::Gaussian => 4,
            ModelSpec::Exponential => 3,
            ModelSpec::BiExponential => 5,
            ModelSpec::TraceModel { .. } => 2,
        }
    }

    pub fn param_kinds(&self) -> Vec<ParamKind> {
        use ParamKind::*;
        match self {
            ModelSpec::LorentzianSum(n) => {
                let mut k = vec![Free];
                for _ in 0..*n {
                    k.extend([Free, Free, Positive]);
                }
                k
            }
            ModelSpec::PseudoVoigt => vec![Free, Free, Free, Positive, Fraction],
            ModelSpec::Gaussian => vec![Free, Free, Free, Positive],
            ModelSpec::Exponential => vec![Free, Free, Positive],
            ModelSpec::BiExponential => vec![Free, Free, Positive, Free, Positive],
            ModelSpec::TraceModel { .. } => vec![Free, Positive],
        }
    }

    pub fn param_names(&self) -> Vec<String> {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect();
        match self {
            ModelSpec::LorentzianSum(n) => {
                let mut names = vec!["baseline".to_string()];
                for i in 0..*n {
                    names.extend([format!("amplitude_{i}"), format!("center_{i}"), format!("fwhm_{i}")]);
                }
                names
            }
            ModelSpec::PseudoVoigt => s(&["baseline", "amplitude", "center", "fwhm", "eta"]),
            ModelSpec::Gaussian => s(&["baseline", "amplitude", "center", "fwhm"]),
            ModelSpec::Exponential => s(&["baseline", "amplitude", "tau"]),
            ModelSpec::BiExponential => s(&["baseline", "amplitude_1", "tau_1", "amplitude_2", "tau_2"]),
            ModelSpec::TraceModel { .. } => s(&["scale", "dark_decay_time"]),
        }
    }

    pub fn name(&self) -> String {
        self.to_string()
    }

    fn check_layout(&self, params: &[f64]) -> Result<()> {
        self.validate()?;
        if params.len() != self.n_params() {
            return Err(Error::Layout { model: self.name(), expected: self.n_params(), got: params.len() });
        }
        Ok(())
    }

    /// Model value at one point; `params` must already match the layout.
    pub(crate) fn value(&self, p: &[f64], x: f64) -> f64 {
        match self {
            ModelSpec::LorentzianSum(n) => {
                p[0] + (0..*n).map(|i| p[1 + 3 * i] * lorentzian(x, p[2 + 3 * i], p[3 + 3 * i])).sum::<f64>()
            }
            ModelSpec::PseudoVoigt => {
                let eta = p[4];
                p[0] + p[1] * (eta * lorentzian(x, p[2], p[3]) + (1.0 - eta) * gaussian(x, p[2], p[3]))
            }
            ModelSpec::Gaussian => p[0] + p[1] * gaussian(x, p[2], p[3]),
            ModelSpec::Exponential => p[0] + p[1] * (-x / p[2]).exp(),
            ModelSpec::BiExponential => p[0] + p[1] * (-x / p[2]).exp() + p[3] * (-x / p[4]).exp(),
            ModelSpec::TraceModel { times, base } => p[0] * interpolate(times, base, x) * (-x / p[1]).exp(),
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSpec::LorentzianSum(n) => write!(f, "lorentzian_sum({n})"),
            ModelSpec::PseudoVoigt => write!(f, "pseudo_voigt"),
            ModelSpec::Gaussian => write!(f, "gaussian"),
            ModelSpec::Exponential => write!(f, "exponential"),
            ModelSpec::BiExponential => write!(f, "bi_exponential"),
            ModelSpec::TraceModel { .. } => write!(f, "trace_model"),
        }
    }
}

/// Parses the names used on the command line. `trace_model` needs a base
/// curve and cannot be built from a name alone.
impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let spec = match s {
            "pseudo_voigt" => ModelSpec::PseudoVoigt,
            "gaussian" => ModelSpec::Gaussian,
            "exponential" => ModelSpec::Exponential,
            "bi_exponential" => ModelSpec::BiExponential,
            _ => {
                let n = s
                    .strip_prefix("lorentzian_sum(")
                    .and_then(|r| r.strip_suffix(')'))
                    .or_else(|| s.strip_prefix("lorentzian_sum:"))
                    .ok_or_else(|| invalid(format!("unknown model '{s}'")))?;
                ModelSpec::LorentzianSum(
                    n.trim().parse().map_err(|_| invalid(format!("bad component count in '{s}'")))?,
                )
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Unit-height Lorentzian of full width `w`.
#[inline]
pub fn lorentzian(x: f64, center: f64, w: f64) -> f64 {
    let hw2 = 0.25 * w * w;
    hw2 / ((x - center).powi(2) + hw2)
}

/// Unit-height Gaussian of full width `w`.
#[inline]
pub fn gaussian(x: f64, center: f64, w: f64) -> f64 {
    (-4.0 * LN_2 * (x - center).powi(2) / (w * w)).exp()
}

/// Evaluate a model on `x`.
pub fn eval_model(spec: &ModelSpec, params: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    spec.check_layout(params)?;
    Ok(x.iter().map(|&xi| spec.value(params, xi)).collect())
}
