use serde::Serialize;

use super::FitResult;

/// A fitted peak paired with the nearest multiple of the satellite spacing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Satellite {
    pub order: i64,
    pub center: f64,
    pub predicted: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Linewidth {
    pub component: usize,
    pub center: f64,
    pub fwhm: f64,
    pub fwhm_std: f64,
}

/// Satellite spacing 1/(2τ) in Hz for an interpulse delay τ in seconds.
pub fn satellite_spacing(tau: f64) -> f64 {
    0.5 / tau
}

fn lorentzian_count(result: &FitResult) -> Option<usize> {
    (result.model.starts_with("lorentzian_sum") && result.params.len() % 3 == 1).then_some(result.params.len() / 3)
}

/// Pair every non-central center of a `lorentzian_sum` fit with the nearest
/// `carrier + n·spacing`. `spacing` and `carrier` are in the fit's x unit;
/// use [`satellite_spacing`] for an x axis in Hz. Other model kinds yield an
/// empty list.
pub fn extract_satellites(result: &FitResult, spacing: f64, carrier: f64) -> Vec<Satellite> {
    let Some(n) = lorentzian_count(result) else {
        return Vec::new();
    };
    let mut out: Vec<Satellite> = (0..n)
        .filter_map(|i| {
            let center = result.params[2 + 3 * i];
            let order = ((center - carrier) / spacing).round() as i64;
            (order != 0).then(|| {
                let predicted = carrier + order as f64 * spacing;
                Satellite { order, center, predicted, residual: center - predicted }
            })
        })
        .collect();
    out.sort_by(|a, b| a.center.total_cmp(&b.center));
    out
}

/// FWHM of each peak component with its 1σ uncertainty, in the fit's x unit.
/// A pseudo-Voigt reports its shared profile width.
pub fn linewidth_report(result: &FitResult) -> Vec<Linewidth> {
    let err = result.std_errors();
    let entry = |component: usize, c: usize, w: usize| Linewidth {
        component,
        center: result.params[c],
        fwhm: result.params[w],
        fwhm_std: err[w],
    };
    if let Some(n) = lorentzian_count(result) {
        return (0..n).map(|i| entry(i, 2 + 3 * i, 3 + 3 * i)).collect();
    }
    match result.model.as_str() {
        "pseudo_voigt" | "gaussian" => vec![entry(0, 2, 3)],
        _ => Vec::new(),
    }
}

/// Starting point for an `n`-component Lorentzian fit with centers at
/// `carrier`, `carrier ± spacing`, `carrier ± 2·spacing`, … (central component
/// first, then alternating sides). Amplitudes are read off the data relative
/// to a baseline taken from the outer tenth of the points; widths start at
/// half the spacing.
pub fn lorentzian_sum_init(x: &[f64], y: &[f64], n: usize, spacing: f64, carrier: f64) -> Vec<f64> {
    let m = x.len();
    let edge = (m / 10).max(1).min(m);
    let baseline = if m == 0 {
        0.0
    } else {
        let tail: Vec<f64> = y[..edge].iter().chain(&y[m - edge..]).copied().collect();
        tail.iter().sum::<f64>() / tail.len() as f64
    };
    let mut orders: Vec<i64> = (0..n as i64).map(|k| if k % 2 == 1 { -(k + 1) / 2 } else { k / 2 }).collect();
    orders.sort_unstable();
    let mut p = vec![baseline];
    for o in orders {
        let c = carrier + o as f64 * spacing;
        let nearest = x
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - c).abs().total_cmp(&(b.1 - c).abs()))
            .map(|(i, _)| y[i])
            .unwrap_or(baseline);
        let mut a = nearest - baseline;
        if a == 0.0 {
            a = f64::EPSILON.max(1e-9 * baseline.abs());
        }
        p.extend([a, c, 0.5 * spacing.abs()]);
    }
    p
}
