//! Levenberg–Marquardt with Marquardt (diagonal) damping.
//!
//! The optimizer works on unconstrained internal parameters: widths and
//! decay times are optimized as their logarithm, pseudo-Voigt mixing through a
//! logistic. Jacobians are central differences in the internal space.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{ModelSpec, ParamKind};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    pub initial_lambda: f64,
    /// Converged when an accepted step lowers the cost by less than this
    /// fraction.
    pub rel_tolerance: f64,
    /// Converged when the proposed step is shorter than this (relative to the
    /// internal parameter norm).
    pub step_tolerance: f64,
    /// Relative central-difference step.
    pub fd_step: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_iterations: 500, initial_lambda: 1e-3, rel_tolerance: 1e-10, step_tolerance: 1e-12, fd_step: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub model: String,
    pub param_names: Vec<String>,
    pub params: Vec<f64>,
    /// Gauss–Newton covariance of `params`, scaled by the reduced chi-square.
    pub covariance: Vec<Vec<f64>>,
    /// sqrt(Σ wᵢ rᵢ²).
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub message: String,
}

impl FitResult {
    /// 1σ uncertainties (square roots of the covariance diagonal).
    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.params.len()).map(|i| self.covariance[i][i].max(0.0).sqrt()).collect()
    }
}

const FRACTION_CLAMP: f64 = 1e-12;

fn to_internal(kind: ParamKind, p: f64) -> f64 {
    match kind {
        ParamKind::Free => p,
        ParamKind::Positive => p.ln(),
        ParamKind::Fraction => {
            let q = p.clamp(FRACTION_CLAMP, 1.0 - FRACTION_CLAMP);
            (q / (1.0 - q)).ln()
        }
    }
}

fn to_external(kind: ParamKind, u: f64) -> f64 {
    match kind {
        ParamKind::Free => u,
        ParamKind::Positive => u.exp(),
        ParamKind::Fraction => 1.0 / (1.0 + (-u).exp()),
    }
}

/// d(external)/d(internal).
fn chain(kind: ParamKind, u: f64) -> f64 {
    match kind {
        ParamKind::Free => 1.0,
        ParamKind::Positive => u.exp(),
        ParamKind::Fraction => {
            let s = 1.0 / (1.0 + (-u).exp());
            s * (1.0 - s)
        }
    }
}

/// Parameter groups used to pick finite-difference step floors.
#[derive(Clone, Copy)]
enum Scale {
    X,
    Y,
    Unit,
}

fn scales(spec: &ModelSpec) -> Vec<Scale> {
    match spec {
        ModelSpec::LorentzianSum(n) => {
            let mut s = vec![Scale::Y];
            for _ in 0..*n {
                s.extend([Scale::Y, Scale::X, Scale::Unit]);
            }
            s
        }
        ModelSpec::PseudoVoigt => vec![Scale::Y, Scale::Y, Scale::X, Scale::Unit, Scale::Unit],
        ModelSpec::Gaussian => vec![Scale::Y, Scale::Y, Scale::X, Scale::Unit],
        ModelSpec::Exponential => vec![Scale::Y, Scale::Y, Scale::Unit],
        ModelSpec::BiExponential => vec![Scale::Y, Scale::Y, Scale::Unit, Scale::Y, Scale::Unit],
        ModelSpec::TraceModel { .. } => vec![Scale::Unit, Scale::Unit],
    }
}

fn span(v: &[f64]) -> f64 {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    hi - lo
}

fn abs_max(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Central-difference step for each parameter: `rel · max(|p|, floor)`,
/// where the floor is the x span for positions, max |y| for levels and 1 for
/// dimensionless (log / logistic / scale) parameters.
fn fd_steps(spec: &ModelSpec, p: &[f64], x: &[f64], y_scale: f64, rel: f64) -> Vec<f64> {
    let xs = span(x).max(f64::MIN_POSITIVE);
    scales(spec)
        .iter()
        .zip(p)
        .map(|(s, v)| {
            let floor = match s {
                Scale::X => xs,
                Scale::Y => y_scale,
                Scale::Unit => 1.0,
            };
            rel * v.abs().max(floor)
        })
        .collect()
}

/// Central-difference Jacobian of the model with respect to its (external)
/// parameters, relative step 1e-6. Row i is ∂f(xᵢ)/∂p.
pub fn jacobian(spec: &ModelSpec, params: &[f64], x: &[f64]) -> Result<DMatrix<f64>> {
    let y = super::eval_model(spec, params, x)?;
    let h = fd_steps(spec, params, x, abs_max(&y).max(f64::MIN_POSITIVE), 1e-6);
    let mut j = DMatrix::zeros(x.len(), params.len());
    let mut p = params.to_vec();
    for (k, hk) in h.iter().enumerate() {
        let p0 = p[k];
        p[k] = p0 + hk;
        let up: Vec<f64> = x.iter().map(|&xi| spec.value(&p, xi)).collect();
        p[k] = p0 - hk;
        let dn: Vec<f64> = x.iter().map(|&xi| spec.value(&p, xi)).collect();
        p[k] = p0;
        for i in 0..x.len() {
            j[(i, k)] = (up[i] - dn[i]) / (2.0 * hk);
        }
    }
    Ok(j)
}

struct Problem<'a> {
    spec: &'a ModelSpec,
    kinds: Vec<ParamKind>,
    x: &'a [f64],
    y: &'a [f64],
    sqrt_w: Vec<f64>,
    y_scale: f64,
}

impl Problem<'_> {
    fn external(&self, u: &DVector<f64>) -> Vec<f64> {
        self.kinds.iter().zip(u.iter()).map(|(k, v)| to_external(*k, *v)).collect()
    }

    fn residuals(&self, u: &DVector<f64>) -> DVector<f64> {
        let p = self.external(u);
        DVector::from_iterator(
            self.x.len(),
            self.x.iter().zip(self.y).zip(&self.sqrt_w).map(|((&xi, &yi), &w)| w * (self.spec.value(&p, xi) - yi)),
        )
    }

    /// Jacobian of the weighted residuals in internal coordinates.
    fn jacobian(&self, u: &DVector<f64>, rel: f64) -> DMatrix<f64> {
        let n = u.len();
        let mut jac = DMatrix::zeros(self.x.len(), n);
        let h = fd_steps(self.spec, u.as_slice(), self.x, self.y_scale, rel);
        let mut v = u.clone();
        for k in 0..n {
            v[k] = u[k] + h[k];
            let up = self.residuals(&v);
            v[k] = u[k] - h[k];
            let dn = self.residuals(&v);
            v[k] = u[k];
            jac.set_column(k, &((up - dn) / (2.0 * h[k])));
        }
        jac
    }
}

fn cost(r: &DVector<f64>) -> f64 {
    r.norm_squared()
}

/// Damped normal-equation step, or `None` when the system cannot be factored.
fn damped_step(jtj: &DMatrix<f64>, g: &DVector<f64>, lambda: f64) -> Option<DVector<f64>> {
    let mut a = jtj.clone();
    for i in 0..a.nrows() {
        let d = jtj[(i, i)];
        a[(i, i)] += lambda * if d > 0.0 { d } else { 1.0 };
    }
    let step = a.cholesky()?.solve(&(-g));
    step.iter().all(|v| v.is_finite()).then_some(step)
}

/// Largest move per iteration of a log-transformed (Positive) and a
/// logistic-transformed (Fraction) parameter. Without a cap a single long step
/// can park η in the flat tail of the logistic, where its gradient vanishes.
const MAX_LOG_STEP: f64 = 2.0;
const MAX_LOGIT_STEP: f64 = 2.0;
/// Largest move per iteration of a peak center, as a fraction of the x span.
const MAX_CENTER_STEP: f64 = 0.05;

/// Shrink the whole step (keeping its direction) so no parameter moves
/// further than its cap.
fn limit_step(caps: &[f64], step: DVector<f64>) -> DVector<f64> {
    let scale =
        caps.iter().zip(step.iter()).filter(|(_, s)| s.abs() > 0.0).fold(1.0f64, |m, (c, s)| m.min(c / s.abs()));
    step * scale
}

/// Moore–Penrose inverse through the symmetric eigendecomposition, dropping
/// eigenvalues below a relative cutoff.
fn pseudo_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let cutoff = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs())) * 1e-14;
    let n = m.nrows();
    let mut out = DMatrix::zeros(n, n);
    for (i, &ev) in eig.eigenvalues.iter().enumerate() {
        if ev > cutoff {
            let v = eig.eigenvectors.column(i);
            out += (v * v.transpose()) / ev;
        }
    }
    out
}

/// Weighted least-squares fit of `spec` to `(x, y)` starting from `init`.
///
/// Non-convergence is reported through `converged = false`, not as an
/// error. Errors are reserved for unusable input.
pub fn fit(spec: &ModelSpec, x: &[f64], y: &[f64], weights: Option<&[f64]>, init: &[f64]) -> Result<FitResult> {
    fit_with(spec, x, y, weights, init, &FitOptions::default())
}

pub fn fit_with(
    spec: &ModelSpec,
    x: &[f64],
    y: &[f64],
    weights: Option<&[f64]>,
    init: &[f64],
    opts: &FitOptions,
) -> Result<FitResult> {
    spec.check_layout(init)?;
    let n = init.len();
    if x.len() != y.len() {
        return Err(Error::Data(format!("x has {} points but y has {}", x.len(), y.len())));
    }
    if x.len() < n {
        return Err(Error::Data(format!("{} points cannot determine {n} parameters", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Data("data contain non-finite values".into()));
    }
    if init.iter().any(|v| !v.is_finite()) {
        return Err(invalid("initial parameters must be finite"));
    }
    let sqrt_w = match weights {
        Some(w) if w.len() != x.len() => {
            return Err(Error::Data(format!("{} weights for {} points", w.len(), x.len())))
        }
        Some(w) if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) => {
            return Err(Error::Data("weights must be finite and non-negative".into()))
        }
        Some(w) => w.iter().map(|v| v.sqrt()).collect(),
        None => vec![1.0; x.len()],
    };
    let kinds = spec.param_kinds();
    for (i, (k, p)) in kinds.iter().zip(init).enumerate() {
        let ok = match k {
            ParamKind::Free => true,
            ParamKind::Positive => *p > 0.0,
            ParamKind::Fraction => (0.0..=1.0).contains(p),
        };
        if !ok {
            return Err(invalid(format!("initial {} = {p} violates its constraint", spec.param_names()[i])));
        }
    }
    let problem = Problem { spec, kinds, x, y, sqrt_w, y_scale: abs_max(y).max(f64::MIN_POSITIVE) };

    let mut u = DVector::from_iterator(n, problem.kinds.iter().zip(init).map(|(k, p)| to_internal(*k, *p)));
    let mut r = problem.residuals(&u);
    let mut c = cost(&r);
    if !c.is_finite() {
        return Err(Error::Numerical { time: 0.0, reason: "model is not finite at the initial parameters".into() });
    }
    let floor = f64::EPSILON * f64::EPSILON * (problem.sqrt_w.iter().zip(y).map(|(w, v)| (w * v).powi(2)).sum::<f64>());
    let x_span = span(x);
    let caps: Vec<f64> = problem
        .kinds
        .iter()
        .zip(scales(spec))
        .map(|(k, s)| match (k, s) {
            (ParamKind::Positive, _) => MAX_LOG_STEP,
            (ParamKind::Fraction, _) => MAX_LOGIT_STEP,
            (ParamKind::Free, Scale::X) if x_span > 0.0 => MAX_CENTER_STEP * x_span,
            _ => f64::INFINITY,
        })
        .collect();
    let mut lambda = opts.initial_lambda;
    let mut converged = false;
    let mut message = String::from("iteration limit reached");
    let mut iterations = 0;

    let mut jac = problem.jacobian(&u, opts.fd_step);
    'outer: while iterations < opts.max_iterations {
        iterations += 1;
        if c <= floor {
            converged = true;
            message = "exact fit".into();
            break;
        }
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        loop {
            let Some(step) = damped_step(&jtj, &g, lambda) else {
                lambda *= 10.0;
                if lambda > 1e20 {
                    message = "normal equations stayed singular under damping".into();
                    break 'outer;
                }
                continue;
            };
            let step = limit_step(&caps, step);
            if step.norm() < opts.step_tolerance * (u.norm() + opts.step_tolerance) {
                converged = true;
                message = "step below tolerance".into();
                break 'outer;
            }
            let trial = &u + &step;
            let r_trial = problem.residuals(&trial);
            let c_trial = cost(&r_trial);
            if c_trial.is_finite() && c_trial < c {
                let rel_change = (c - c_trial) / c;
                u = trial;
                r = r_trial;
                c = c_trial;
                lambda = (lambda / 10.0).max(1e-15);
                if rel_change < opts.rel_tolerance {
                    converged = true;
                    message = "relative cost change below tolerance".into();
                    break 'outer;
                }
                jac = problem.jacobian(&u, opts.fd_step);
                break;
            }
            lambda *= 10.0;
            if lambda > 1e20 {
                message = "no descent direction found".into();
                break 'outer;
            }
        }
    }

    let params = problem.external(&u);
    let jac = problem.jacobian(&u, opts.fd_step);
    let dof = (x.len() - n).max(1) as f64;
    let s2 = c / dof;
    let cov_u = pseudo_inverse(&(jac.transpose() * &jac)) * s2;
    let d: Vec<f64> = problem.kinds.iter().zip(u.iter()).map(|(k, v)| chain(*k, *v)).collect();
    let covariance = (0..n).map(|i| (0..n).map(|j| d[i] * cov_u[(i, j)] * d[j]).collect()).collect();
    Ok(FitResult {
        model: spec.name(),
        param_names: spec.param_names(),
        params,
        covariance,
        residual_norm: c.sqrt(),
        iterations,
        converged,
        message,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transforms_round_trip() {
        for (k, p) in [(ParamKind::Free, -3.5), (ParamKind::Positive, 27.0), (ParamKind::Fraction, 0.3)] {
            assert!((to_external(k, to_internal(k, p)) - p).abs() < 1e-14);
            let u = to_internal(k, p);
            let fd = (to_external(k, u + 1e-6) - to_external(k, u - 1e-6)) / 2e-6;
            assert!((fd - chain(k, u)).abs() < 1e-6 * chain(k, u).abs().max(1.0));
        }
    }

    #[test]
    fn pseudo_inverse_of_spd() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let inv = pseudo_inverse(&m);
        let id = &m * &inv;
        assert!((id - DMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        let spec = ModelSpec::Exponential;
        let x = [0.0, 1.0, 2.0];
        assert!(fit(&spec, &x, &[1.0, 0.5], None, &[0.0, 1.0, 1.0]).is_err());
        assert!(fit(&spec, &x[..2], &[1.0, 0.5], None, &[0.0, 1.0, 1.0]).is_err());
        assert!(fit(&spec, &x, &[1.0, 0.5, 0.2], None, &[0.0, 1.0, -1.0]).is_err());
        assert!(fit(&spec, &x, &[1.0, 0.5, 0.2], Some(&[1.0, -1.0, 1.0]), &[0.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn reports_non_convergence() {
        let x: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| (-v / 7.0).exp() + 0.01 * (v * 1.3).sin()).collect();
        let opts = FitOptions { max_iterations: 2, ..FitOptions::default() };
        let r = fit_with(&ModelSpec::Exponential, &x, &y, None, &[0.3, 3.0, 40.0], &opts).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 2);
    }
}
