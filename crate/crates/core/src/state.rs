use num_complex::Complex64 as C64;

use crate::error::{invalid, Result};

/// Tolerance on the positivity condition |ρ_eg|² ≤ ρ_ee·ρ_gg.
pub const POSITIVITY_SLACK: f64 = 1e-9;

/// State of the two-level system.
///
/// Only ρ_ee and ρ_eg are stored: ρ_gg = 1 − ρ_ee and ρ_ge = conj(ρ_eg), so
/// trace and Hermiticity hold by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix {
    ee: f64,
    eg: C64,
}

impl DensityMatrix {
    /// Validated constructor: population in [0, 1] and the state positive
    /// semidefinite (within [`POSITIVITY_SLACK`]).
    pub fn new(rho_ee: f64, rho_eg: C64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho_ee) || !rho_eg.re.is_finite() || !rho_eg.im.is_finite() {
            return Err(invalid(format!("rho_ee = {rho_ee} outside [0, 1] or non-finite coherence")));
        }
        let rho = Self { ee: rho_ee, eg: rho_eg };
        if rho.positivity_excess() > POSITIVITY_SLACK {
            return Err(invalid(format!(
                "|rho_eg|^2 = {} exceeds rho_ee*rho_gg = {}",
                rho_eg.norm_sqr(),
                rho_ee * (1.0 - rho_ee)
            )));
        }
        Ok(rho)
    }

    /// Unchecked constructor used by the integrator, which enforces its own bounds.
    pub(crate) fn from_parts(rho_ee: f64, rho_eg: C64) -> Self {
        Self { ee: rho_ee, eg: rho_eg }
    }

    pub fn excited() -> Self {
        Self { ee: 1.0, eg: C64::new(0.0, 0.0) }
    }

    pub fn ground() -> Self {
        Self { ee: 0.0, eg: C64::new(0.0, 0.0) }
    }

    /// Pure state cos(θ/2)|g⟩ + e^{iφ} sin(θ/2)|e⟩.
    pub fn pure(theta: f64, phi: f64) -> Self {
        let (s, c) = (0.5 * theta).sin_cos();
        Self { ee: s * s, eg: C64::from_polar(s * c, phi) }
    }

    #[inline]
    pub fn rho_ee(&self) -> f64 {
        self.ee
    }

    #[inline]
    pub fn rho_gg(&self) -> f64 {
        1.0 - self.ee
    }

    #[inline]
    pub fn rho_eg(&self) -> C64 {
        self.eg
    }

    #[inline]
    pub fn rho_ge(&self) -> C64 {
        self.eg.conj()
    }

    /// |ρ_eg|² − ρ_ee·ρ_gg; positive values mean the state is unphysical.
    pub fn positivity_excess(&self) -> f64 {
        self.eg.norm_sqr() - self.ee * (1.0 - self.ee)
    }

    /// Elements in generator order `[ee, gg, eg, ge]`.
    pub fn to_elements(&self) -> [C64; 4] {
        [C64::new(self.ee, 0.0), C64::new(1.0 - self.ee, 0.0), self.eg, self.eg.conj()]
    }

    /// Bloch vector (x, y, z) with z = ρ_ee − ρ_gg.
    pub fn bloch(&self) -> [f64; 3] {
        [2.0 * self.eg.re, -2.0 * self.eg.im, 2.0 * self.ee - 1.0]
    }
}
