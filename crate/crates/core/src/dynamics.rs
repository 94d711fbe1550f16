//! Driven, damped two-level dynamics in the carrier rotating frame.
//!
//! The master equation for the matrix elements reads
//!
//! ```text
//! dρ_ee/dt = i Ω/2 (ρ_eg − ρ_ge) − Γ ρ_ee
//! dρ_gg/dt = −i Ω/2 (ρ_eg − ρ_ge) + Γ ρ_ee
//! dρ_ge/dt = (iΔ − Γ/2) ρ_ge − i Ω/2 (ρ_ee − ρ_gg)
//! dρ_eg/dt = (−iΔ − Γ/2) ρ_eg + i Ω/2 (ρ_ee − ρ_gg)
//! ```
//!
//! with Ω = Ω_x(t) real for the pulse train. The same linear generator acts on
//! arbitrary (non-Hermitian) 2×2 matrices, which is what the two-time
//! correlators need. A complex Ω(t) (drive in both quadratures) is accepted so
//! a single-sideband probe tone can be added; for real Ω the two forms agree.
//!
//! Integration is fixed-step RK4. Each output interval is split at every
//! discontinuity of the drive (edges of the truncated pulses, probe turn-on) and
//! subdivided with `pulse_substep` where a pulse is active, `base_step` elsewhere.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;

use crate::error::{invalid, Error, Result};
use crate::params::EmitterParams;
use crate::pulse::PulseSequence;
use crate::state::DensityMatrix;

/// Matrix elements in the order `[ee, gg, eg, ge]`.
pub type Elements = [C64; 4];

/// Row-major 4×4 complex matrix acting on [`Elements`].
pub type Mat4 = [[C64; 4]; 4];

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const POPULATION_SLACK: f64 = 1e-6;

/// A time-dependent Rabi frequency.
pub trait Drive: Sync {
    /// Ω(t) for a time inside the smooth segment whose midpoint is `mid`. The
    /// midpoint decides on which side of a discontinuity `t` is taken.
    fn rabi_on_segment(&self, t: f64, mid: f64) -> C64;

    fn rabi(&self, t: f64) -> C64 {
        self.rabi_on_segment(t, t)
    }

    /// Whether any pulse is switched on somewhere in `[a, b]`.
    fn pulse_active(&self, a: f64, b: f64) -> bool;

    /// Discontinuities of Ω strictly inside `(a, b)`, appended in ascending order.
    fn breakpoints(&self, a: f64, b: f64, out: &mut Vec<f64>);
}

impl Drive for PulseSequence {
    fn rabi_on_segment(&self, t: f64, mid: f64) -> C64 {
        match self.pulse_at(mid) {
            Some(k) => {
                let x = (t - self.center(k)) / self.sigma_t();
                C64::new(self.peak_amplitude * (-0.5 * x * x).exp(), 0.0)
            }
            None => ZERO,
        }
    }

    fn pulse_active(&self, a: f64, b: f64) -> bool {
        let hw = self.support_halfwidth;
        let k = if self.n_pulses == 1 {
            0.0
        } else {
            ((a - hw - self.first_center) / self.interpulse_delay).ceil().max(0.0)
        };
        if k >= self.n_pulses as f64 {
            return false;
        }
        let c = self.center(k as usize);
        c - hw <= b && c + hw >= a
    }

    fn breakpoints(&self, a: f64, b: f64, out: &mut Vec<f64>) {
        if self.support_halfwidth.is_infinite() {
            return;
        }
        let hw = self.support_halfwidth;
        let first = if self.n_pulses == 1 {
            0
        } else {
            ((a - hw - self.first_center) / self.interpulse_delay).floor().max(0.0) as usize
        };
        for k in first..self.n_pulses {
            let c = self.center(k);
            if c - hw >= b {
                break;
            }
            for edge in [c - hw, c + hw] {
                if edge > a && edge < b {
                    out.push(edge);
                }
            }
        }
    }
}

/// `None` is the undriven system.
impl<D: Drive> Drive for Option<D> {
    fn rabi_on_segment(&self, t: f64, mid: f64) -> C64 {
        self.as_ref().map_or(ZERO, |d| d.rabi_on_segment(t, mid))
    }

    fn pulse_active(&self, a: f64, b: f64) -> bool {
        self.as_ref().is_some_and(|d| d.pulse_active(a, b))
    }

    fn breakpoints(&self, a: f64, b: f64, out: &mut Vec<f64>) {
        if let Some(d) = self {
            d.breakpoints(a, b, out)
        }
    }
}

impl<D: Drive + ?Sized> Drive for &D {
    fn rabi_on_segment(&self, t: f64, mid: f64) -> C64 {
        (**self).rabi_on_segment(t, mid)
    }

    fn pulse_active(&self, a: f64, b: f64) -> bool {
        (**self).pulse_active(a, b)
    }

    fn breakpoints(&self, a: f64, b: f64, out: &mut Vec<f64>) {
        (**self).breakpoints(a, b, out)
    }
}

/// Right-hand side of the master equation applied to a general 2×2 matrix.
#[inline]
pub fn generator(x: &Elements, omega: C64, delta: f64, gamma: f64) -> Elements {
    let [ee, gg, eg, ge] = *x;
    let i_half = C64::new(0.0, 0.5);
    let pop = ee - gg;
    let d_ee = i_half * (omega.conj() * eg - omega * ge) - gamma * ee;
    let d_eg = C64::new(-0.5 * gamma, -delta) * eg + i_half * omega * pop;
    let d_ge = C64::new(-0.5 * gamma, delta) * ge - i_half * omega.conj() * pop;
    [d_ee, -d_ee, d_eg, d_ge]
}

#[inline]
fn axpy(x: &Elements, a: f64, k: &Elements) -> Elements {
    [x[0] + k[0] * a, x[1] + k[1] * a, x[2] + k[2] * a, x[3] + k[3] * a]
}

/// Rabi frequencies at the start, middle and end of one RK4 step.
#[derive(Clone, Copy)]
struct StepDrive([C64; 3]);

impl StepDrive {
    fn sample<D: Drive + ?Sized>(drive: &D, t: f64, dt: f64, mid: f64) -> Self {
        Self([
            drive.rabi_on_segment(t, mid),
            drive.rabi_on_segment(t + 0.5 * dt, mid),
            drive.rabi_on_segment(t + dt, mid),
        ])
    }
}

#[inline]
fn rk4(x: &Elements, dt: f64, w: StepDrive, delta: f64, gamma: f64) -> Elements {
    let k1 = generator(x, w.0[0], delta, gamma);
    let k2 = generator(&axpy(x, 0.5 * dt, &k1), w.0[1], delta, gamma);
    let k3 = generator(&axpy(x, 0.5 * dt, &k2), w.0[1], delta, gamma);
    let k4 = generator(&axpy(x, dt, &k3), w.0[2], delta, gamma);
    let s = dt / 6.0;
    std::array::from_fn(|i| x[i] + (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * s)
}

/// Advance a general matrix by one RK4 step of length `dt` starting at `t`.
pub fn rk4_elements<D: Drive + ?Sized>(x: &Elements, t: f64, dt: f64, delta: f64, drive: &D, gamma: f64) -> Elements {
    rk4(x, dt, StepDrive::sample(drive, t, dt, t + 0.5 * dt), delta, gamma)
}

/// Visit the RK4 substeps `(t, dt, segment_mid)` that cover `[t0, t1]`.
fn for_each_substep<D: Drive + ?Sized>(
    t0: f64,
    t1: f64,
    drive: &D,
    base_step: f64,
    pulse_substep: f64,
    scratch: &mut Vec<f64>,
    mut f: impl FnMut(f64, f64, f64),
) {
    scratch.clear();
    drive.breakpoints(t0, t1, scratch);
    let min_len = 1e-6 * pulse_substep;
    let mut a = t0;
    for b in scratch.iter().copied().chain(std::iter::once(t1)) {
        if b - a <= min_len {
            continue;
        }
        let h = if drive.pulse_active(a, b) { pulse_substep } else { base_step };
        let n = ((b - a) / h - 1e-9).ceil().max(1.0) as usize;
        let dt = (b - a) / n as f64;
        let mid = 0.5 * (a + b);
        for i in 0..n {
            f(a + i as f64 * dt, dt, mid);
        }
        a = b;
    }
}

/// Output grid and step sizes for [`evolve`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t_start: f64,
    pub t_end: f64,
    /// Largest step (and output spacing) outside pulses, seconds.
    pub base_step: f64,
    /// Largest step while a pulse is on, seconds.
    pub pulse_substep: f64,
}

/// Substeps per envelope FWHM required by [`TimeGrid::validate_for`].
pub const MIN_SUBSTEPS_PER_FWHM: f64 = 20.0;

impl TimeGrid {
    pub fn new(t_start: f64, t_end: f64, base_step: f64, pulse_substep: f64) -> Result<Self> {
        let g = Self { t_start, t_end, base_step, pulse_substep };
        g.validate()?;
        Ok(g)
    }

    /// Default steps for a train: τ/200 outside pulses, FWHM/40 inside.
    pub fn for_sequence(t_start: f64, t_end: f64, seq: &PulseSequence) -> Result<Self> {
        let base = default_base_step(seq);
        Self::new(t_start, t_end, base, default_pulse_substep(seq).min(base))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_end > self.t_start) || !self.t_start.is_finite() || !self.t_end.is_finite() {
            return Err(invalid(format!("time grid needs t_end > t_start, got [{}, {}]", self.t_start, self.t_end)));
        }
        if !(self.base_step > 0.0) || !(self.pulse_substep > 0.0) {
            return Err(invalid("time steps must be positive"));
        }
        if self.pulse_substep > self.base_step {
            return Err(invalid("pulse_substep must not exceed base_step"));
        }
        Ok(())
    }

    /// Also require enough substeps to resolve the pulse envelope.
    pub fn validate_for(&self, seq: &PulseSequence) -> Result<()> {
        self.validate()?;
        if seq.envelope_fwhm / self.pulse_substep < MIN_SUBSTEPS_PER_FWHM - 1e-9 {
            return Err(invalid(format!(
                "pulse_substep {:e} s gives fewer than {MIN_SUBSTEPS_PER_FWHM} steps per envelope FWHM",
                self.pulse_substep
            )));
        }
        Ok(())
    }

    pub fn n_intervals(&self) -> usize {
        (((self.t_end - self.t_start) / self.base_step) - 1e-9).ceil().max(1.0) as usize
    }

    pub fn points(&self) -> Vec<f64> {
        let n = self.n_intervals();
        let h = (self.t_end - self.t_start) / n as f64;
        (0..=n).map(|k| if k == n { self.t_end } else { self.t_start + k as f64 * h }).collect()
    }

    pub fn halved(&self) -> Self {
        Self { base_step: 0.5 * self.base_step, pulse_substep: 0.5 * self.pulse_substep, ..*self }
    }
}

pub fn default_base_step(seq: &PulseSequence) -> f64 {
    seq.interpulse_delay / 200.0
}

pub fn default_pulse_substep(seq: &PulseSequence) -> f64 {
    seq.envelope_fwhm / 40.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &DensityMatrix {
        self.states.last().expect("trajectory is never empty")
    }

    pub fn span(&self) -> (f64, f64) {
        (self.times[0], *self.times.last().expect("trajectory is never empty"))
    }

    /// State at a grid time, matched to within `tol` seconds.
    pub fn sample_at(&self, t: f64, tol: f64) -> Option<&DensityMatrix> {
        let i = self.times.partition_point(|&x| x < t - tol);
        (i < self.times.len() && (self.times[i] - t).abs() <= tol).then(|| &self.states[i])
    }

    pub fn populations(&self) -> Vec<f64> {
        self.states.iter().map(DensityMatrix::rho_ee).collect()
    }
}

fn check_populations(x: &Elements, t: f64) -> Result<()> {
    let ee = x[0].re;
    if !ee.is_finite() || !(-POPULATION_SLACK..=1.0 + POPULATION_SLACK).contains(&ee) {
        return Err(Error::Numerical { time: t, reason: format!("excited population {ee} left [0, 1]") });
    }
    Ok(())
}

fn to_density(x: &Elements) -> DensityMatrix {
    DensityMatrix::from_parts(x[0].re, 0.5 * (x[2] + x[3].conj()))
}

/// One RK4 step of the master equation at static detuning `delta`.
pub fn step<D: Drive + ?Sized>(
    rho: &DensityMatrix,
    t: f64,
    dt: f64,
    delta: f64,
    drive: &D,
    params: &EmitterParams,
) -> Result<DensityMatrix> {
    if !(dt > 0.0) {
        return Err(invalid(format!("step size must be positive, got {dt}")));
    }
    let x = rk4_elements(&rho.to_elements(), t, dt, delta, drive, params.decay_rate);
    check_populations(&x, t + dt)?;
    Ok(to_density(&x))
}

/// Integrate from `rho0` at `grid.t_start`, recording the state at every grid point.
pub fn evolve<D: Drive + ?Sized>(
    rho0: &DensityMatrix,
    grid: &TimeGrid,
    delta: f64,
    drive: &D,
    params: &EmitterParams,
) -> Result<Trajectory> {
    grid.validate()?;
    params.validate()?;
    let times = grid.points();
    let gamma = params.decay_rate;
    let mut states = Vec::with_capacity(times.len());
    states.push(*rho0);
    let mut x = rho0.to_elements();
    let mut scratch = Vec::new();
    for w in times.windows(2) {
        let mut failure = None;
        for_each_substep(w[0], w[1], drive, grid.base_step, grid.pulse_substep, &mut scratch, |t, dt, mid| {
            if failure.is_some() {
                return;
            }
            x = rk4(&x, dt, StepDrive::sample(drive, t, dt, mid), delta, gamma);
            if let Err(e) = check_populations(&x, t + dt) {
                failure = Some(e);
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        // re-impose Hermiticity and unit trace
        let rho = to_density(&x);
        x = rho.to_elements();
        states.push(rho);
    }
    Ok(Trajectory { times, states })
}

/// One-interval propagators of the linear generator on a uniform lattice
/// `t0 + j·step`, j = 0..=n.
#[derive(Debug, Clone)]
pub struct Propagators {
    pub t0: f64,
    pub step: f64,
    mats: Vec<Mat4>,
}

impl Propagators {
    #[allow(clippy::too_many_arguments)]
    pub fn build<D: Drive + ?Sized>(
        t0: f64,
        step: f64,
        n_intervals: usize,
        delta: f64,
        drive: &D,
        params: &EmitterParams,
        base_step: f64,
        pulse_substep: f64,
    ) -> Self {
        let gamma = params.decay_rate;
        let mut scratch = Vec::new();
        let mats = (0..n_intervals)
            .map(|j| {
                let a = t0 + j as f64 * step;
                let b = t0 + (j + 1) as f64 * step;
                let mut cols: [Elements; 4] = std::array::from_fn(|c| {
                    let mut e = [ZERO; 4];
                    e[c] = C64::new(1.0, 0.0);
                    e
                });
                for_each_substep(a, b, drive, base_step, pulse_substep, &mut scratch, |t, dt, mid| {
                    let w = StepDrive::sample(drive, t, dt, mid);
                    for col in cols.iter_mut() {
                        *col = rk4(col, dt, w, delta, gamma);
                    }
                });
                std::array::from_fn(|r| std::array::from_fn(|c| cols[c][r]))
            })
            .collect();
        Self { t0, step, mats }
    }

    pub fn n_intervals(&self) -> usize {
        self.mats.len()
    }

    /// Propagate `x` across interval `j` (from `t0 + j·step` to the next lattice point).
    #[inline]
    pub fn apply(&self, j: usize, x: &Elements) -> Elements {
        let m = &self.mats[j];
        std::array::from_fn(|r| m[r][0] * x[0] + m[r][1] * x[1] + m[r][2] * x[2] + m[r][3] * x[3])
    }
}

/// Phase bookkeeping of a single refocusing pulse with Γ = 0.
///
/// Starts from the equal superposition, evolves freely for τ, applies one
/// calibrated π pulse centered at τ and evolves for another τ. Returns the
/// wrapped phase arg ρ_eg(2τ) − arg ρ_eg(0); zero for an ideal echo.
pub fn echo_check(delta: f64, tau: f64, envelope_fwhm: f64, params: &EmitterParams) -> Result<f64> {
    let seq = PulseSequence::calibrated(1, 2.0 * tau, envelope_fwhm, PI)?.with_first_center(tau);
    if seq.support_halfwidth >= tau {
        return Err(invalid("pulse support must fit inside the echo interval"));
    }
    let grid = TimeGrid::new(0.0, 2.0 * tau, tau / 2000.0, (envelope_fwhm / 200.0).min(tau / 2000.0))?;
    let rho0 = DensityMatrix::pure(PI / 2.0, 0.0);
    let traj = evolve(&rho0, &grid, delta, &seq, params)?;
    let phase = traj.final_state().rho_eg().arg() - rho0.rho_eg().arg();
    Ok((phase + PI).rem_euclid(2.0 * PI) - PI)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const NS: f64 = 1e-9;

    fn gamma_params() -> EmitterParams {
        EmitterParams::from_lifetime(12.3 * NS).unwrap()
    }

    fn no_drive() -> Option<PulseSequence> {
        None
    }

    #[test]
    fn pure_decay_single_steps() {
        let p = gamma_params();
        let mut rho = DensityMatrix::excited();
        let dt = 0.05 * NS;
        for k in 0..200 {
            rho = step(&rho, k as f64 * dt, dt, 0.0, &no_drive(), &p).unwrap();
        }
        let t = 200.0 * dt;
        assert_relative_eq!(rho.rho_ee(), (-p.decay_rate * t).exp(), max_relative = 1e-10);
    }

    #[test]
    fn free_coherence_closed_form() {
        let p = gamma_params();
        let delta = 2.0 * PI * 25e6;
        let rho0 = DensityMatrix::pure(PI / 2.0, 0.3);
        let grid = TimeGrid::new(0.0, 30.0 * NS, 0.01 * NS, 0.01 * NS).unwrap();
        let traj = evolve(&rho0, &grid, delta, &no_drive(), &p).unwrap();
        for (t, rho) in traj.times.iter().zip(&traj.states) {
            let want = rho0.rho_eg() * (C64::new(-0.5 * p.decay_rate, -delta) * *t).exp();
            assert!((rho.rho_eg() - want).norm() < 1e-10, "t = {t}");
        }
    }

    #[test]
    fn pure_decay_trajectory() {
        let p = gamma_params();
        let grid = TimeGrid::new(0.0, 3.0 / p.decay_rate, 0.05 * NS, 0.05 * NS).unwrap();
        let traj = evolve(&DensityMatrix::excited(), &grid, 0.0, &no_drive(), &p).unwrap();
        for (t, rho) in traj.times.iter().zip(&traj.states) {
            assert_relative_eq!(rho.rho_ee(), (-p.decay_rate * t).exp(), max_relative = 1e-8);
        }
    }

    #[test]
    fn pi_pulse_inverts_ground_state() {
        let p = EmitterParams { decay_rate: 1e-30, dark_decay_time: None };
        let seq = PulseSequence::calibrated(1, 10.0 * NS, 1.6 * NS, PI).unwrap();
        let h = seq.support_halfwidth;
        // coarse default-like steps
        let grid = TimeGrid::new(-h - NS, h + NS, 0.05 * NS, 0.04 * NS).unwrap();
        let traj = evolve(&DensityMatrix::ground(), &grid, 0.0, &seq, &p).unwrap();
        assert!(traj.final_state().rho_ee() >= 0.999);
        // very fine reference
        let fine = TimeGrid::new(-h - NS, h + NS, 0.001 * NS, 0.0005 * NS).unwrap();
        let reference = evolve(&DensityMatrix::ground(), &fine, 0.0, &seq, &p).unwrap();
        assert!((reference.final_state().rho_ee() - 1.0).abs() < 1e-10);
        assert!((traj.final_state().rho_ee() - reference.final_state().rho_ee()).abs() < 1e-6);
    }

    #[test]
    fn pi_train_alternates_populations() {
        let p = EmitterParams { decay_rate: 1e-30, dark_decay_time: None };
        let tau = 10.0 * NS;
        let seq = PulseSequence::calibrated(6, tau, 1.6 * NS, PI).unwrap().with_first_center(tau / 2.0);
        let grid = TimeGrid::for_sequence(0.0, 6.0 * tau, &seq).unwrap();
        let traj = evolve(&DensityMatrix::ground(), &grid, 0.0, &seq, &p).unwrap();
        for k in 0..6 {
            let t_after = seq.center(k) + tau / 2.0;
            let rho = traj.sample_at(t_after, 1e-15).unwrap();
            let want = if k % 2 == 0 { 1.0 } else { 0.0 };
            assert!((rho.rho_ee() - want).abs() < 1e-3, "after pulse {k}: {}", rho.rho_ee());
        }
    }

    #[test]
    fn step_rejects_bad_input() {
        let p = gamma_params();
        assert!(step(&DensityMatrix::excited(), 0.0, 0.0, 0.0, &no_drive(), &p).is_err());
        // a huge step with strong drive blows RK4 out of [0, 1]
        let seq = PulseSequence::calibrated(1, 10.0 * NS, 1.6 * NS, PI).unwrap();
        assert!(step(&DensityMatrix::ground(), -0.5 * NS, 2.0 * NS, 0.0, &seq, &p).is_err());
    }

    #[test]
    fn breakpoints_and_activity() {
        let seq = PulseSequence::calibrated(3, 10.0 * NS, 1.6 * NS, PI).unwrap();
        let hw = seq.support_halfwidth;
        let mut out = Vec::new();
        seq.breakpoints(-5.0 * NS, 25.0 * NS, &mut out);
        assert_eq!(out.len(), 6);
        assert_relative_eq!(out[0], -hw);
        assert_relative_eq!(out[5], 20.0 * NS + hw);
        assert!(seq.pulse_active(9.0 * NS, 9.5 * NS));
        assert!(!seq.pulse_active(3.0 * NS, 7.0 * NS));
        assert!(!seq.pulse_active(25.0 * NS, 27.0 * NS));
        assert!(seq.pulse_active(-100.0 * NS, 100.0 * NS));
    }

    #[test]
    fn propagators_reproduce_evolve() {
        let p = gamma_params();
        let tau = 10.0 * NS;
        let seq = PulseSequence::calibrated(4, tau, 1.6 * NS, PI).unwrap().with_first_center(tau);
        let grid = TimeGrid::for_sequence(0.0, 4.0 * tau, &seq).unwrap();
        let delta = 2.0 * PI * 30e6;
        let traj = evolve(&DensityMatrix::excited(), &grid, delta, &seq, &p).unwrap();
        let n = grid.n_intervals();
        let props =
            Propagators::build(0.0, 4.0 * tau / n as f64, n, delta, &seq, &p, grid.base_step, grid.pulse_substep);
        let mut x = DensityMatrix::excited().to_elements();
        for j in 0..n {
            x = props.apply(j, &x);
            let rho = &traj.states[j + 1];
            assert!((x[0].re - rho.rho_ee()).abs() < 1e-12);
            assert!((x[2] - rho.rho_eg()).norm() < 1e-12);
        }
    }

    #[test]
    fn echo_refocuses_phase() {
        let p = EmitterParams { decay_rate: 1e-30, dark_decay_time: None };
        let tau = 10.0 * NS;
        let delta = 2.0 * PI * 25e6;
        // single-interval phase is π/2
        assert_relative_eq!(delta * tau, PI / 2.0, max_relative = 1e-12);
        let r = echo_check(delta, tau, tau / 100.0, &p).unwrap();
        assert!(r.abs() < 0.01, "residual {r}");
        assert!(echo_check(0.0, tau, tau / 100.0, &p).unwrap().abs() < 1e-9);
        // finite 1.6 ns pulse: reported, only sanity-bounded
        let finite = echo_check(delta, tau, 1.6 * NS, &p).unwrap();
        assert!(finite.abs() < PI);
    }
}
