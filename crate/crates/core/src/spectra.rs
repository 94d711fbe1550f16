//! Stimulated-emission (P₁), direct-absorption (P₂) and net-absorption
//! (Q = P₂ − P₁) spectra.
//!
//! ```text
//! P₂(ω) = A·Re ∫₀ᵀ dt ∫₀^{T−t} dθ ⟨σ₋(t) σ₊(t+θ)⟩ e^{−iωθ}
//! P₁(ω) = A·Re ∫₀ᵀ dt ∫₀^{T−t} dθ ⟨σ₊(t+θ) σ₋(t)⟩ e^{−iωθ}
//! ```
//!
//! Two-time correlators follow the quantum regression theorem: the seed
//! ρ(t)σ₋ (for P₂) or σ₋ρ(t) (for P₁) is propagated in θ with the
//! master-equation generator, and Tr[σ₊ Λ(t, θ)] = Λ_ge is read out.
//!
//! The emitter starts in |e⟩ at t = 0, which stands in for pulse 0 of the
//! train; the remaining pulses follow at τ, 2τ, … and the default observation
//! horizon is T = N·τ.

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::dynamics::{
    default_base_step, default_pulse_substep, evolve, Drive, Elements, Propagators, TimeGrid, Trajectory,
};
use crate::error::{invalid, Error, Result};
use crate::params::{DetuningModel, EmitterParams, Realization};
use crate::pulse::PulseSequence;
use crate::state::DensityMatrix;

/// Horizon for free-decay (undriven) spectra, in lifetimes.
pub const FREE_DECAY_LIFETIMES: f64 = 25.0;

/// Integration lattice for the two-time correlators. The t and θ axes share
/// one step so that every θ-propagation reuses the same interval propagators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelatorGrid {
    /// T, seconds.
    pub horizon: f64,
    /// Lower limit of the t integral, seconds (0 integrates the whole record).
    pub window_start: f64,
    /// Largest correlation delay θ, seconds.
    pub theta_max: f64,
    /// Lattice step of both t and θ, seconds.
    pub step: f64,
    /// ODE step outside pulses.
    pub base_step: f64,
    /// ODE step inside pulses.
    pub pulse_substep: f64,
}

impl CorrelatorGrid {
    /// T = N·τ, lattice step τ/50, ODE steps τ/200 and FWHM/40.
    pub fn for_sequence(seq: &PulseSequence) -> Self {
        let horizon = seq.n_pulses as f64 * seq.interpulse_delay;
        let base = default_base_step(seq);
        Self {
            horizon,
            window_start: 0.0,
            theta_max: horizon,
            step: seq.interpulse_delay / 50.0,
            base_step: base,
            pulse_substep: default_pulse_substep(seq).min(base),
        }
    }

    /// Grid for undriven spectra: horizon of [`FREE_DECAY_LIFETIMES`] lifetimes.
    pub fn free_decay(params: &EmitterParams, step: f64) -> Self {
        let horizon = FREE_DECAY_LIFETIMES / params.decay_rate;
        Self { horizon, window_start: 0.0, theta_max: horizon, step, base_step: step / 4.0, pulse_substep: step / 4.0 }
    }

    pub fn with_window_start(mut self, t: f64) -> Self {
        self.window_start = t;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(invalid("correlator horizon must be positive"));
        }
        if !(self.step > 0.0) || !(self.base_step > 0.0) || !(self.pulse_substep > 0.0) {
            return Err(invalid("correlator steps must be positive"));
        }
        if self.pulse_substep > self.base_step {
            return Err(invalid("pulse_substep must not exceed base_step"));
        }
        if !(self.theta_max > 0.0) || self.theta_max > self.horizon * (1.0 + 1e-12) {
            return Err(invalid("theta_max must lie in (0, horizon]"));
        }
        if !(self.window_start >= 0.0) || self.window_start >= self.horizon {
            return Err(invalid("window_start must lie in [0, horizon)"));
        }
        if self.step > self.horizon {
            return Err(invalid("correlator step exceeds the horizon"));
        }
        Ok(())
    }

    /// Also require the θ step to resolve the highest requested frequency.
    pub fn validate_for(&self, freqs_hz: &[f64]) -> Result<()> {
        self.validate()?;
        let f_max = freqs_hz.iter().fold(0.0f64, |m, f| m.max(f.abs()));
        if f_max > 0.0 && self.step > 1.0 / (10.0 * f_max) * (1.0 + 1e-9) {
            return Err(invalid(format!(
                "correlator step {:e} s cannot resolve {:e} Hz (needs <= 1/(10 f_max))",
                self.step, f_max
            )));
        }
        Ok(())
    }

    fn lattice(&self) -> Lattice {
        let m = ((self.horizon / self.step) - 1e-9).ceil().max(1.0) as usize;
        let h = self.horizon / m as f64;
        let sub = ((h / self.base_step) - 1e-9).ceil().max(1.0) as usize;
        let start = ((self.window_start / h).round() as usize).min(m - 1);
        let k_max = (((self.theta_max / h) + 1e-9).floor() as usize).min(m);
        Lattice { m, h, sub, start, k_max }
    }

    /// ODE grid whose output points contain every lattice point.
    pub fn time_grid(&self) -> Result<TimeGrid> {
        let l = self.lattice();
        let base = self.horizon / (l.m * l.sub) as f64;
        TimeGrid::new(0.0, self.horizon, base, self.pulse_substep.min(base))
    }
}

#[derive(Debug, Clone, Copy)]
struct Lattice {
    /// Number of lattice intervals on [0, T].
    m: usize,
    h: f64,
    /// ODE output intervals per lattice interval.
    sub: usize,
    /// Lattice index of the window start.
    start: usize,
    /// Largest θ index.
    k_max: usize,
}

/// Default frequency list: `n` points spanning ±1.5/τ around the carrier, Hz.
pub fn default_frequencies(tau: f64, n: usize) -> Vec<f64> {
    linspace(-1.5 / tau, 1.5 / tau, n)
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// The drive seen after the excited-state preparation: pulses 1..N of `seq`.
pub fn prepared_drive(seq: &PulseSequence) -> Option<PulseSequence> {
    (seq.n_pulses > 1).then(|| PulseSequence {
        n_pulses: seq.n_pulses - 1,
        first_center: seq.first_center + seq.interpulse_delay,
        ..*seq
    })
}

/// Two-time correlator sampled on the lattice: `rows[j][k] = C(t_j, θ_k)` with
/// `t_j = t_first + j·step` and `θ_k = k·step`.
#[derive(Debug, Clone)]
pub struct CorrelatorField {
    pub t_first: f64,
    pub step: f64,
    pub rows: Vec<Vec<C64>>,
}

impl CorrelatorField {
    pub fn at(&self, j: usize, k: usize) -> Option<C64> {
        self.rows.get(j).and_then(|r| r.get(k)).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Seed {
    /// ρσ₋, absorption.
    RhoSigmaMinus,
    /// σ₋ρ, stimulated emission.
    SigmaMinusRho,
}

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

impl Seed {
    #[inline]
    fn elements(self, rho: &DensityMatrix) -> Elements {
        let ee = C64::new(rho.rho_ee(), 0.0);
        let gg = C64::new(rho.rho_gg(), 0.0);
        match self {
            Seed::RhoSigmaMinus => [rho.rho_eg(), ZERO, ZERO, gg],
            Seed::SigmaMinusRho => [ZERO, rho.rho_eg(), ZERO, ee],
        }
    }
}

/// Tr[σ₊ Λ] = Λ_ge.
#[inline]
fn readout(x: &Elements) -> C64 {
    x[3]
}

/// Everything needed to evaluate correlators for one detuning realization.
struct Realized {
    lattice: Lattice,
    states: Vec<DensityMatrix>,
    props: Propagators,
}

impl Realized {
    fn new<D: Drive + ?Sized>(
        traj: &Trajectory,
        delta: f64,
        drive: &D,
        params: &EmitterParams,
        grid: &CorrelatorGrid,
    ) -> Result<Self> {
        grid.validate()?;
        let lattice = grid.lattice();
        let (t0, t1) = traj.span();
        let tol = 1e-6 * lattice.h;
        if t0 > tol || t1 < grid.horizon - tol {
            return Err(Error::Coverage { start: t0, end: t1, need_start: 0.0, need_end: grid.horizon });
        }
        let states = (0..=lattice.m)
            .map(|j| {
                let t = j as f64 * lattice.h;
                traj.sample_at(t, tol)
                    .copied()
                    .ok_or_else(|| invalid(format!("trajectory has no sample at lattice time {t:e} s")))
            })
            .collect::<Result<Vec<_>>>()?;
        let base = lattice.h / lattice.sub as f64;
        let props =
            Propagators::build(0.0, lattice.h, lattice.m, delta, drive, params, base, grid.pulse_substep.min(base));
        Ok(Self { lattice, states, props })
    }

    fn field(&self, seed: Seed) -> CorrelatorField {
        let l = &self.lattice;
        let rows = (l.start..=l.m)
            .map(|j| {
                let k_end = l.k_max.min(l.m - j);
                let mut x = seed.elements(&self.states[j]);
                let mut row = Vec::with_capacity(k_end + 1);
                row.push(readout(&x));
                for k in 0..k_end {
                    x = self.props.apply(j + k, &x);
                    row.push(readout(&x));
                }
                row
            })
            .collect();
        CorrelatorField { t_first: l.start as f64 * l.h, step: l.h, rows }
    }
}

/// C₂(t, θ) = ⟨σ₋(t) σ₊(t+θ)⟩ on the correlator lattice.
pub fn correlator_p2<D: Drive + ?Sized>(
    traj: &Trajectory,
    delta: f64,
    drive: &D,
    params: &EmitterParams,
    grid: &CorrelatorGrid,
) -> Result<CorrelatorField> {
    Ok(Realized::new(traj, delta, drive, params, grid)?.field(Seed::RhoSigmaMinus))
}

/// C₁(t, θ) = ⟨σ₊(t+θ) σ₋(t)⟩ on the correlator lattice.
pub fn correlator_p1<D: Drive + ?Sized>(
    traj: &Trajectory,
    delta: f64,
    drive: &D,
    params: &EmitterParams,
    grid: &CorrelatorGrid,
) -> Result<CorrelatorField> {
    Ok(Realized::new(traj, delta, drive, params, grid)?.field(Seed::SigmaMinusRho))
}

/// Trajectory from the excited state over `[0, T]` on the correlator grid.
pub fn observation_trajectory<D: Drive + ?Sized>(
    delta: f64,
    drive: &D,
    params: &EmitterParams,
    grid: &CorrelatorGrid,
) -> Result<Trajectory> {
    grid.validate()?;
    evolve(&DensityMatrix::excited(), &grid.time_grid()?, delta, drive, params)
}

/// Trapezoid weights for `n + 1` equally spaced points with unit spacing.
#[inline]
fn trapezoid_weight(i: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else if i == 0 || i == n {
        0.5
    } else {
        1.0
    }
}

/// D(θ_k) = ∫ C(t, θ_k) dt over t ∈ [t_first, T − θ_k].
fn collapse(field: &CorrelatorField) -> Vec<C64> {
    let n_rows = field.rows.len();
    let k_len = field.rows.first().map_or(0, Vec::len);
    (0..k_len)
        .map(|k| {
            // rows that reach θ_k are j = 0..=last
            let last = field.rows.iter().rposition(|r| r.len() > k).unwrap_or(0);
            debug_assert!(last < n_rows);
            let sum: C64 = (0..=last).map(|j| field.rows[j][k] * trapezoid_weight(j, last)).sum();
            sum * field.step
        })
        .collect()
}

/// Precomputed e^{−iωθ_k}·w_k·h for a frequency list and a θ lattice.
pub struct FourierTable {
    rows: Vec<Vec<C64>>,
}

impl FourierTable {
    pub fn new(freqs_hz: &[f64], step: f64, k_max: usize) -> Self {
        let rows = freqs_hz
            .iter()
            .map(|f| {
                let w = -std::f64::consts::TAU * f * step;
                (0..=k_max).map(|k| C64::from_polar(trapezoid_weight(k, k_max) * step, w * k as f64)).collect()
            })
            .collect();
        Self { rows }
    }

    fn transform(&self, d: &[C64]) -> Vec<f64> {
        self.rows.iter().map(|row| row.iter().zip(d).map(|(e, x)| (e * x).re).sum()).collect()
    }
}

/// Unnormalized P₁ and P₂ of one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct RawLine {
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
}

fn raw_line<D: Drive + ?Sized>(
    delta: f64,
    drive: &D,
    params: &EmitterParams,
    grid: &CorrelatorGrid,
    table: &FourierTable,
) -> Result<RawLine> {
    let traj = observation_trajectory(delta, drive, params, grid)?;
    let realized = Realized::new(&traj, delta, drive, params, grid)?;
    let d1 = collapse(&realized.field(Seed::SigmaMinusRho));
    let d2 = collapse(&realized.field(Seed::RhoSigmaMinus));
    Ok(RawLine { p1: table.transform(&d1), p2: table.transform(&d2) })
}

/// Spectrum on a frequency grid given as detuning from the pulse carrier (Hz).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub frequencies: Vec<f64>,
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
    pub q: Vec<f64>,
    /// Ensemble standard error of `q` (zero for deterministic or quadrature ensembles).
    pub stderr: Vec<f64>,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.frequencies.len();
        if [self.p1.len(), self.p2.len(), self.q.len(), self.stderr.len()].iter().any(|&l| l != n) {
            return Err(invalid("spectrum arrays differ in length"));
        }
        if self.frequencies.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("spectrum frequencies must be strictly increasing"));
        }
        Ok(())
    }

    /// Divide every array by `a`.
    pub fn scaled(mut self, a: f64) -> Self {
        for v in [&mut self.p1, &mut self.p2, &mut self.q, &mut self.stderr] {
            v.iter_mut().for_each(|x| *x /= a);
        }
        self
    }

    /// Frequency spacing (assumes a uniform grid).
    pub fn grid_step(&self) -> f64 {
        if self.len() < 2 {
            0.0
        } else {
            (self.frequencies[self.len() - 1] - self.frequencies[0]) / (self.len() - 1) as f64
        }
    }

    pub fn mean_stderr(&self) -> f64 {
        self.stderr.iter().sum::<f64>() / self.len().max(1) as f64
    }
}

fn check_freqs(freqs_hz: &[f64]) -> Result<()> {
    if freqs_hz.is_empty() {
        return Err(invalid("frequency list is empty"));
    }
    if freqs_hz.iter().any(|f| !f.is_finite()) || freqs_hz.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("frequencies must be finite and strictly increasing"));
    }
    Ok(())
}

/// Ensemble average of P₁, P₂ and Q with A = 1. Realizations are evaluated in
/// parallel and reduced in index order.
pub fn ensemble_spectrum_raw<D: Drive + ?Sized>(
    model: &DetuningModel,
    drive: &D,
    params: &EmitterParams,
    grid: &CorrelatorGrid,
    freqs_hz: &[f64],
) -> Result<Spectrum> {
    params.validate()?;
    check_freqs(freqs_hz)?;
    grid.validate_for(freqs_hz)?;
    let realizations = model.realizations()?;
    let lattice = grid.lattice();
    let table = FourierTable::new(freqs_hz, lattice.h, lattice.k_max.min(lattice.m - lattice.start));
    let lines: Vec<(Realization, RawLine)> = realizations
        .par_iter()
        .map(|r| raw_line(r.detuning, drive, params, grid, &table).map(|l| (*r, l)))
        .collect::<Result<_>>()?;
    Ok(reduce(&lines, freqs_hz, model.is_sampled()))
}

fn reduce(lines: &[(Realization, RawLine)], freqs_hz: &[f64], sampled: bool) -> Spectrum {
    let n_f = freqs_hz.len();
    let mut p1 = vec![0.0; n_f];
    let mut p2 = vec![0.0; n_f];
    for (r, line) in lines {
        for i in 0..n_f {
            p1[i] += r.weight * line.p1[i];
            p2[i] += r.weight * line.p2[i];
        }
    }
    let q: Vec<f64> = p2.iter().zip(&p1).map(|(a, b)| a - b).collect();
    let n = lines.len();
    let stderr = if sampled && n > 1 {
        (0..n_f)
            .map(|i| {
                let ss: f64 = lines.iter().map(|(_, l)| (l.p2[i] - l.p1[i] - q[i]).powi(2)).sum();
                (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt()
            })
            .collect()
    } else {
        vec![0.0; n_f]
    };
    Spectrum { frequencies: freqs_hz.to_vec(), p1, p2, q, stderr }
}

/// Normalization constant: peak of the uncontrolled reference Q.
pub fn reference_peak(reference: &Spectrum) -> Result<f64> {
    let peak = reference.q.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let peak = if peak > 0.0 { peak } else { reference.q.iter().fold(0.0f64, |m, &x| m.max(x.abs())) };
    if !(peak > 0.0) || !peak.is_finite() {
        return Err(Error::Numerical { time: 0.0, reason: "uncontrolled reference spectrum vanishes".into() });
    }
    Ok(peak)
}

/// Pulse-train ensemble spectrum, scaled so that the uncontrolled reference of
/// the same parameters peaks at 1.
pub fn ensemble_spectrum(
    model: &DetuningModel,
    seq: &PulseSequence,
    params: &EmitterParams,
    grid: &CorrelatorGrid,
    freqs_hz: &[f64],
) -> Result<Spectrum> {
    seq.validate()?;
    let raw = ensemble_spectrum_raw(model, &prepared_drive(seq), params, grid, freqs_hz)?;
    let reference = ensemble_spectrum_raw(model, &None::<PulseSequence>, params, grid, freqs_hz)?;
    Ok(raw.scaled(reference_peak(&reference)?))
}

/// Single static detuning; same normalization as [`ensemble_spectrum`].
pub fn spectrum_single(
    delta: f64,
    seq: &PulseSequence,
    params: &EmitterParams,
    grid: &CorrelatorGrid,
    freqs_hz: &[f64],
) -> Result<Spectrum> {
    ensemble_spectrum(&DetuningModel::fixed(delta), seq, params, grid, freqs_hz)
}

/// Undriven ensemble spectrum (still prepared in |e⟩), scaled to unit Q peak.
pub fn uncontrolled_reference(
    model: &DetuningModel,
    params: &EmitterParams,
    grid: &CorrelatorGrid,
    freqs_hz: &[f64],
) -> Result<Spectrum> {
    let raw = ensemble_spectrum_raw(model, &None::<PulseSequence>, params, grid, freqs_hz)?;
    let peak = reference_peak(&raw)?;
    Ok(raw.scaled(peak))
}

/// Local extremum of `values` closest to `target` (within `max_steps` grid
/// points). Returns `(index, is_minimum)`.
pub fn local_extremum_near(freqs: &[f64], values: &[f64], target: f64, max_steps: usize) -> Option<(usize, bool)> {
    let n = values.len();
    if n < 3 {
        return None;
    }
    let center = freqs.iter().enumerate().min_by(|a, b| (a.1 - target).abs().total_cmp(&(b.1 - target).abs()))?.0;
    let lo = center.saturating_sub(max_steps).max(1);
    let hi = (center + max_steps).min(n - 2);
    (lo..=hi)
        .filter_map(|i| {
            let (a, b, c) = (values[i - 1], values[i], values[i + 1]);
            if b < a && b <= c {
                Some((i, true))
            } else if b > a && b >= c {
                Some((i, false))
            } else {
                None
            }
        })
        .min_by_key(|(i, _)| i.abs_diff(center))
}

/// Share of Σ|values| that lies within `halfwidth` of `center`.
pub fn weight_fraction(freqs: &[f64], values: &[f64], center: f64, halfwidth: f64) -> f64 {
    let total: f64 = values.iter().map(|v| v.abs()).sum();
    let inner: f64 =
        freqs.iter().zip(values).filter(|(f, _)| (*f - center).abs() <= halfwidth).map(|(_, v)| v.abs()).sum();
    inner / total
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{PI, TAU};

    const NS: f64 = 1e-9;

    fn params() -> EmitterParams {
        EmitterParams::from_lifetime(12.3 * NS).unwrap()
    }

    fn undriven() -> Option<PulseSequence> {
        None
    }

    #[test]
    fn lattice_and_time_grid_agree() {
        let seq = PulseSequence::calibrated(12, 10.0 * NS, 1.6 * NS, PI).unwrap();
        let grid = CorrelatorGrid::for_sequence(&seq);
        let l = grid.lattice();
        assert_eq!(l.m, 600);
        assert_eq!(l.sub, 4);
        let tg = grid.time_grid().unwrap();
        assert_eq!(tg.n_intervals(), 2400);
        let pts = tg.points();
        for j in [0, 1, 17, 600] {
            assert!((pts[j * 4] - j as f64 * l.h).abs() < 1e-18);
        }
    }

    #[test]
    fn theta_zero_identities_with_pulses() {
        let p = params();
        let seq = PulseSequence::calibrated(6, 10.0 * NS, 1.6 * NS, PI).unwrap();
        let grid = CorrelatorGrid::for_sequence(&seq);
        let drive = prepared_drive(&seq);
        let delta = TAU * 17e6;
        let traj = observation_trajectory(delta, &drive, &p, &grid).unwrap();
        let c1 = correlator_p1(&traj, delta, &drive, &p, &grid).unwrap();
        let c2 = correlator_p2(&traj, delta, &drive, &p, &grid).unwrap();
        for (j, (r1, r2)) in c1.rows.iter().zip(&c2.rows).enumerate() {
            let rho = traj.sample_at(c1.t_first + j as f64 * c1.step, 1e-15).unwrap();
            assert!((r1[0] - rho.rho_ee()).norm() < 1e-9);
            assert!((r2[0] - rho.rho_gg()).norm() < 1e-9);
        }
    }

    #[test]
    fn free_correlators_closed_form() {
        let p = params();
        let g = p.decay_rate;
        let delta = TAU * 20e6;
        let grid = CorrelatorGrid {
            horizon: 60.0 * NS,
            window_start: 0.0,
            theta_max: 60.0 * NS,
            step: 0.2 * NS,
            base_step: 0.02 * NS,
            pulse_substep: 0.02 * NS,
        };
        let traj = observation_trajectory(delta, &undriven(), &p, &grid).unwrap();
        let c1 = correlator_p1(&traj, delta, &undriven(), &p, &grid).unwrap();
        let c2 = correlator_p2(&traj, delta, &undriven(), &p, &grid).unwrap();
        for j in (0..c1.rows.len()).step_by(37) {
            let t = j as f64 * c1.step;
            for k in (0..c1.rows[j].len()).step_by(23) {
                let th = k as f64 * c1.step;
                let phase = (C64::new(-0.5 * g, delta) * th).exp();
                let want1 = (-g * t).exp() * phase;
                let want2 = (1.0 - (-g * t).exp()) * phase;
                assert!((c1.rows[j][k] - want1).norm() < 1e-9, "C1 at j={j} k={k}");
                assert!((c2.rows[j][k] - want2).norm() < 1e-9, "C2 at j={j} k={k}");
            }
        }
    }

    #[test]
    fn ground_state_correlators() {
        let p = params();
        let delta = TAU * -8e6;
        let grid = CorrelatorGrid {
            horizon: 20.0 * NS,
            window_start: 0.0,
            theta_max: 20.0 * NS,
            step: 0.2 * NS,
            base_step: 0.02 * NS,
            pulse_substep: 0.02 * NS,
        };
        let tg = grid.time_grid().unwrap();
        let traj = evolve(&DensityMatrix::ground(), &tg, delta, &undriven(), &p).unwrap();
        let c1 = correlator_p1(&traj, delta, &undriven(), &p, &grid).unwrap();
        let c2 = correlator_p2(&traj, delta, &undriven(), &p, &grid).unwrap();
        assert!(c1.rows.iter().flatten().all(|c| c.norm() == 0.0));
        for k in 0..c2.rows[0].len() {
            let th = k as f64 * c2.step;
            let want = (C64::new(-0.5 * p.decay_rate, delta) * th).exp();
            assert!((c2.rows[0][k] - want).norm() < 1e-9);
        }
    }

    #[test]
    fn coverage_error() {
        let p = params();
        let grid = CorrelatorGrid {
            horizon: 20.0 * NS,
            window_start: 0.0,
            theta_max: 20.0 * NS,
            step: 0.2 * NS,
            base_step: 0.05 * NS,
            pulse_substep: 0.05 * NS,
        };
        let short = TimeGrid::new(0.0, 10.0 * NS, 0.05 * NS, 0.05 * NS).unwrap();
        let traj = evolve(&DensityMatrix::excited(), &short, 0.0, &undriven(), &p).unwrap();
        assert!(matches!(correlator_p1(&traj, 0.0, &undriven(), &p, &grid), Err(Error::Coverage { .. })));
    }

    #[test]
    fn grid_validation() {
        let p = params();
        let grid = CorrelatorGrid::free_decay(&p, 1.0 * NS);
        assert!(grid.validate_for(&[-50e6, 50e6]).is_ok());
        assert!(grid.validate_for(&[-200e6, 200e6]).is_err());
        assert!(CorrelatorGrid { theta_max: 2.0 * grid.horizon, ..grid }.validate().is_err());
        assert!(CorrelatorGrid { step: 0.0, ..grid }.validate().is_err());
    }

    #[test]
    fn zero_sigma_ensemble_equals_single() {
        let p = params();
        let seq = PulseSequence::calibrated(3, 10.0 * NS, 1.6 * NS, PI).unwrap();
        let grid = CorrelatorGrid::for_sequence(&seq);
        let freqs = default_frequencies(10.0 * NS, 41);
        let delta = TAU * 12e6;
        let single = spectrum_single(delta, &seq, &p, &grid, &freqs).unwrap();
        let ens = ensemble_spectrum(&DetuningModel::monte_carlo(delta, 0.0, 50, 9), &seq, &p, &grid, &freqs).unwrap();
        assert_eq!(single, ens);
        assert!(single.stderr.iter().all(|&s| s == 0.0));
        single.validate().unwrap();
    }

    #[test]
    fn extremum_and_weight_helpers() {
        let f = linspace(-5.0, 5.0, 11);
        let v: Vec<f64> = f.iter().map(|x| 1.0 - (-x * x).exp()).collect();
        assert_eq!(local_extremum_near(&f, &v, 0.0, 1), Some((5, true)));
        assert_eq!(local_extremum_near(&f, &f, 0.0, 2), None);
        let w = weight_fraction(&f, &[1.0; 11], 0.0, 1.0);
        assert!((w - 3.0 / 11.0).abs() < 1e-15);
    }
}
