use serde::Serialize;

use super::{extract_satellites, fit, lorentzian_sum_init, FitResult, ModelSpec, Satellite};
use crate::error::{Error, Result};

/// Minimum number of samples a fit window must hold.
pub const MIN_WINDOW_POINTS: usize = 5;

/// Single-Lorentzian description of the feature at the carrier.
#[derive(Debug, Clone, Serialize)]
pub struct CarrierFeature {
    /// Sample index and kind (`true` = minimum) of a local extremum within
    /// one grid step of the carrier.
    pub extremum: Option<(usize, bool)>,
    /// Curve value interpolated at the carrier.
    pub value: f64,
    pub amplitude: f64,
    pub center: f64,
    pub fwhm: f64,
    pub fit: FitResult,
}

/// Linear interpolation of `ys(xs)` at `x`, clamped to the ends. `xs` must be
/// increasing.
pub fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if n == 0 {
        return f64::NAN;
    }
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let i = xs.partition_point(|&v| v <= x) - 1;
    let f = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + f * (ys[i + 1] - ys[i])
}

fn window(x: &[f64], y: &[f64], center: f64, halfwidth: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.len() != y.len() {
        return Err(Error::Data(format!("x has {} samples, y has {}", x.len(), y.len())));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        x.iter().zip(y).filter(|(v, _)| (**v - center).abs() <= halfwidth).map(|(a, b)| (*a, *b)).unzip();
    if xs.len() < MIN_WINDOW_POINTS {
        return Err(Error::Data(format!(
            "only {} samples within {halfwidth} of {center}, need {MIN_WINDOW_POINTS}",
            xs.len()
        )));
    }
    Ok((xs, ys))
}

/// Fit baseline + one Lorentzian to the samples within `halfwidth` of the
/// carrier and look for a local extremum at the carrier itself.
pub fn carrier_feature(x: &[f64], y: &[f64], carrier: f64, halfwidth: f64) -> Result<CarrierFeature> {
    let (xs, ys) = window(x, y, carrier, halfwidth)?;
    let value = interpolate(x, y, carrier);
    let baseline = 0.5 * (ys[0] + ys[ys.len() - 1]);
    let mut a = value - baseline;
    if a == 0.0 {
        a = 1e-9 * baseline.abs().max(f64::MIN_POSITIVE);
    }
    let init = [baseline, a, carrier, halfwidth];
    let fit = fit(&ModelSpec::LorentzianSum(1), &xs, &ys, None, &init)?;
    Ok(CarrierFeature {
        extremum: crate::spectra::local_extremum_near(x, y, carrier, 1),
        value,
        amplitude: fit.params[1],
        center: fit.params[2],
        fwhm: fit.params[3],
        fit,
    })
}

/// `n`-component Lorentzian fit seeded at `carrier + k·spacing` and the
/// satellite table derived from it.
pub fn satellite_fit(
    x: &[f64],
    y: &[f64],
    n: usize,
    spacing: f64,
    carrier: f64,
) -> Result<(FitResult, Vec<Satellite>)> {
    let spec = ModelSpec::LorentzianSum(n);
    let init = lorentzian_sum_init(x, y, n, spacing, carrier);
    let r = fit(&spec, x, y, None, &init)?;
    let sats = extract_satellites(&r, spacing, carrier);
    Ok((r, sats))
}

/// Largest |y| within `halfwidth` of `center`.
pub fn peak_magnitude(x: &[f64], y: &[f64], center: f64, halfwidth: f64) -> f64 {
    x.iter().zip(y).filter(|(v, _)| (**v - center).abs() <= halfwidth).fold(0.0, |m, (_, v)| m.max(v.abs()))
}

/// Depth of a dip at the carrier measured against the shoulders at
/// `carrier ± offset`: mean(shoulders) − y(carrier), positive for a dip.
/// Returns the depth and its standard error from the pointwise errors.
pub fn dip_depth(x: &[f64], y: &[f64], err: &[f64], carrier: f64, offset: f64) -> (f64, f64) {
    let at = |v: &[f64], t: f64| interpolate(x, v, t);
    let left = carrier - offset;
    let right = carrier + offset;
    let depth = 0.5 * (at(y, left) + at(y, right)) - at(y, carrier);
    let var = 0.25 * (at(err, left).powi(2) + at(err, right).powi(2)) + at(err, carrier).powi(2);
    (depth, var.sqrt())
}

/// Mean of the outer tenth of the samples (first and last 5%).
fn edge_baseline(y: &[f64]) -> f64 {
    let m = y.len();
    let k = (m / 20).max(1).min(m);
    let tail: Vec<f64> = y[..k].iter().chain(&y[m - k..]).copied().collect();
    tail.iter().sum::<f64>() / tail.len() as f64
}

/// Index of the largest deviation from `baseline` and the width (in x) over
/// which the deviation stays above half of it.
fn dominant_peak(x: &[f64], y: &[f64], baseline: f64) -> (usize, f64) {
    let i = (0..y.len()).max_by(|&a, &b| (y[a] - baseline).abs().total_cmp(&(y[b] - baseline).abs())).unwrap_or(0);
    let half = 0.5 * (y[i] - baseline).abs();
    let mut lo = i;
    while lo > 0 && (y[lo - 1] - baseline).abs() > half {
        lo -= 1;
    }
    let mut hi = i;
    while hi + 1 < y.len() && (y[hi + 1] - baseline).abs() > half {
        hi += 1;
    }
    let span = x[x.len() - 1] - x[0];
    let w = x[hi] - x[lo];
    (i, if w > 0.0 { w } else { span / 10.0 })
}

/// Data-driven starting point for `spec`. A `lorentzian_sum` with more than
/// one component needs a satellite `spacing` (centers at carrier + k·spacing).
pub fn initial_guess(spec: &ModelSpec, x: &[f64], y: &[f64], spacing: Option<f64>, carrier: f64) -> Result<Vec<f64>> {
    spec.validate()?;
    if x.len() != y.len() || x.len() < spec.n_params() {
        return Err(Error::Data(format!("{} samples are not enough for {spec}", x.len().min(y.len()))));
    }
    let span = x[x.len() - 1] - x[0];
    if !(span > 0.0) {
        return Err(Error::Data("x must be increasing".into()));
    }
    let nonzero = |a: f64| if a == 0.0 { 1e-9 } else { a };
    Ok(match spec {
        ModelSpec::LorentzianSum(n) if *n > 1 || spacing.is_some() => {
            let d = spacing.ok_or_else(|| Error::Data(format!("{spec} needs a satellite spacing or explicit init")))?;
            lorentzian_sum_init(x, y, *n, d, carrier)
        }
        ModelSpec::LorentzianSum(_) | ModelSpec::Gaussian | ModelSpec::PseudoVoigt => {
            let b = edge_baseline(y);
            let (i, w) = dominant_peak(x, y, b);
            let mut p = vec![b, nonzero(y[i] - b), x[i], w];
            if *spec == ModelSpec::PseudoVoigt {
                p.push(0.5);
            }
            p
        }
        ModelSpec::Exponential | ModelSpec::BiExponential => {
            let k = (y.len() / 10).max(1);
            let b = y[y.len() - k..].iter().sum::<f64>() / k as f64;
            let a = nonzero(y[0] - b);
            let t = x
                .iter()
                .zip(y)
                .find(|(_, v)| (**v - b).abs() < a.abs() / std::f64::consts::E)
                .map_or(span / 3.0, |(t, _)| (t - x[0]).max(span / 1000.0));
            if *spec == ModelSpec::Exponential {
                vec![b, a, t]
            } else {
                vec![b, 0.5 * a, 0.2 * t, 0.5 * a, 3.0 * t]
            }
        }
        ModelSpec::TraceModel { times, base } => {
            let b0 = super::interpolate(times, base, x[0]);
            vec![if b0 != 0.0 && y[0] != 0.0 { y[0] / b0 } else { 1.0 }, span]
        }
    })
}
