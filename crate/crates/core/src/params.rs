//! Emitter constants and the spectral-diffusion ensemble.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmitterParams {
    /// Spontaneous emission rate Γ in 1/s.
    pub decay_rate: f64,
    /// Time constant of the slow loss into a dark state, seconds. Only the
    /// fluorescence trace model uses it.
    pub dark_decay_time: Option<f64>,
}

impl EmitterParams {
    pub fn new(decay_rate: f64, dark_decay_time: Option<f64>) -> Result<Self> {
        let p = Self { decay_rate, dark_decay_time };
        p.validate()?;
        Ok(p)
    }

    /// Γ = 1/lifetime.
    pub fn from_lifetime(lifetime: f64) -> Result<Self> {
        if !(lifetime > 0.0) {
            return Err(invalid(format!("lifetime must be positive, got {lifetime}")));
        }
        Self::new(1.0 / lifetime, None)
    }

    pub fn with_dark_decay(mut self, t_dark: f64) -> Result<Self> {
        self.dark_decay_time = Some(t_dark);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.decay_rate > 0.0) || !self.decay_rate.is_finite() {
            return Err(invalid(format!("decay rate must be positive, got {}", self.decay_rate)));
        }
        if let Some(t) = self.dark_decay_time {
            if !(t > 0.0) {
                return Err(invalid(format!("dark decay time must be positive, got {t}")));
            }
        }
        Ok(())
    }
}

/// How the Gaussian detuning distribution is sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Sampling {
    /// Seeded Monte-Carlo draws, one RNG stream per realization.
    MonteCarlo,
    /// Gauss–Hermite quadrature of the given order; noise free.
    GaussHermite { order: usize },
    /// Equally spaced nodes over mean ± [`UNIFORM_HALF_RANGE`]·σ with
    /// normalized Gaussian weights; noise free. Suited to observables that are
    /// sharp in Δ (natural-linewidth features), where Gauss–Hermite nodes are
    /// too sparse near the center.
    Uniform { nodes: usize },
}

/// Half-range of the [`Sampling::Uniform`] grid in units of σ.
pub const UNIFORM_HALF_RANGE: f64 = 5.0;

/// Static-per-sequence detuning drawn from Normal(mean, sigma), angular units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetuningModel {
    pub mean: f64,
    pub sigma: f64,
    pub n_realizations: usize,
    pub seed: u64,
    pub sampling: Sampling,
}

/// One ensemble member: a static detuning and its weight (weights sum to 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Realization {
    pub index: usize,
    pub detuning: f64,
    pub weight: f64,
}

impl DetuningModel {
    pub fn fixed(detuning: f64) -> Self {
        Self { mean: detuning, sigma: 0.0, n_realizations: 1, seed: 0, sampling: Sampling::MonteCarlo }
    }

    pub fn monte_carlo(mean: f64, sigma: f64, n_realizations: usize, seed: u64) -> Self {
        Self { mean, sigma, n_realizations, seed, sampling: Sampling::MonteCarlo }
    }

    pub fn gauss_hermite(mean: f64, sigma: f64, order: usize) -> Self {
        Self { mean, sigma, n_realizations: order, seed: 0, sampling: Sampling::GaussHermite { order } }
    }

    pub fn uniform(mean: f64, sigma: f64, nodes: usize) -> Self {
        Self { mean, sigma, n_realizations: nodes, seed: 0, sampling: Sampling::Uniform { nodes } }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mean.is_finite() {
            return Err(invalid("detuning mean must be finite"));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(invalid(format!("detuning sigma must be >= 0, got {}", self.sigma)));
        }
        match self.sampling {
            Sampling::MonteCarlo if self.n_realizations == 0 => Err(invalid("n_realizations must be >= 1")),
            Sampling::GaussHermite { order } if order == 0 || order > 100 => {
                Err(invalid(format!("Gauss-Hermite order must be in 1..=100, got {order}")))
            }
            Sampling::Uniform { nodes } if nodes < 2 => Err(invalid("uniform sampling needs at least 2 nodes")),
            _ => Ok(()),
        }
    }

    pub fn is_deterministic(&self) -> bool {
        self.sigma == 0.0
    }

    /// Whether the ensemble error bar is a sampling error (Monte-Carlo only).
    pub fn is_sampled(&self) -> bool {
        !self.is_deterministic() && self.sampling == Sampling::MonteCarlo
    }

    /// Ensemble members in realization-index order. The draw for index `i`
    /// depends only on `(seed, i)`, never on evaluation order.
    pub fn realizations(&self) -> Result<Vec<Realization>> {
        self.validate()?;
        if self.is_deterministic() {
            return Ok(vec![Realization { index: 0, detuning: self.mean, weight: 1.0 }]);
        }
        match self.sampling {
            Sampling::MonteCarlo => {
                let n = self.n_realizations;
                Ok((0..n)
                    .map(|i| Realization {
                        index: i,
                        detuning: self.mean + self.sigma * standard_normal_draw(self.seed, i as u64),
                        weight: 1.0 / n as f64,
                    })
                    .collect())
            }
            Sampling::GaussHermite { order } => {
                let (nodes, weights) = gauss_hermite(order);
                let norm = std::f64::consts::PI.sqrt();
                Ok(nodes
                    .iter()
                    .zip(&weights)
                    .enumerate()
                    .map(|(i, (x, w))| Realization {
                        index: i,
                        detuning: self.mean + std::f64::consts::SQRT_2 * self.sigma * x,
                        weight: w / norm,
                    })
                    .collect())
            }
            Sampling::Uniform { nodes } => {
                let xs: Vec<f64> = (0..nodes)
                    .map(|i| -UNIFORM_HALF_RANGE + 2.0 * UNIFORM_HALF_RANGE * i as f64 / (nodes - 1) as f64)
                    .collect();
                let raw: Vec<f64> = xs.iter().map(|x| (-0.5 * x * x).exp()).collect();
                let total: f64 = raw.iter().sum();
                Ok(xs
                    .iter()
                    .zip(&raw)
                    .enumerate()
                    .map(|(i, (x, w))| Realization {
                        index: i,
                        detuning: self.mean + self.sigma * x,
                        weight: w / total,
                    })
                    .collect())
            }
        }
    }
}

fn standard_normal_draw(seed: u64, index: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    StandardNormal.sample(&mut rng)
}

/// Nodes and weights for ∫ e^{-x²} f(x) dx (Golub–Welsch), nodes ascending.
pub fn gauss_hermite(order: usize) -> (Vec<f64>, Vec<f64>) {
    let n = order;
    let jacobi =
        DMatrix::from_fn(n, n, |i, j| if i + 1 == j || j + 1 == i { (i.max(j) as f64 / 2.0).sqrt() } else { 0.0 });
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let v0 = eig.eigenvectors[(0, k)];
            (eig.eigenvalues[k], std::f64::consts::PI.sqrt() * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // the rule is symmetric; enforce it exactly so mirrored detunings pair up
    for k in 0..n / 2 {
        let (x, w) = (0.5 * (pairs[n - 1 - k].0 - pairs[k].0), 0.5 * (pairs[k].1 + pairs[n - 1 - k].1));
        pairs[k] = (-x, w);
        pairs[n - 1 - k] = (x, w);
    }
    if n % 2 == 1 {
        pairs[n / 2].0 = 0.0;
    }
    pairs.into_iter().unzip()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_hermite_low_orders() {
        let (x, w) = gauss_hermite(2);
        assert_relative_eq!(x[1], 1.0 / 2f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(w[0], std::f64::consts::PI.sqrt() / 2.0, max_relative = 1e-14);
        let (x, _) = gauss_hermite(3);
        assert_relative_eq!(x[2], 1.5f64.sqrt(), max_relative = 1e-14);
        assert_eq!(x[1], 0.0);
    }

    #[test]
    fn gauss_hermite_moments_of_normal() {
        // E[X^2k] for a standard normal: (2k-1)!!
        let m = DetuningModel::gauss_hermite(0.0, 1.0, 21);
        let r = m.realizations().unwrap();
        let moment = |p: i32| r.iter().map(|z| z.weight * z.detuning.powi(p)).sum::<f64>();
        assert_relative_eq!(moment(0), 1.0, max_relative = 1e-13);
        assert!(moment(1).abs() < 1e-13);
        assert_relative_eq!(moment(2), 1.0, max_relative = 1e-12);
        assert_relative_eq!(moment(4), 3.0, max_relative = 1e-12);
        assert_relative_eq!(moment(10), 945.0, max_relative = 1e-10);
    }

    #[test]
    fn uniform_grid_moments() {
        let m = DetuningModel::uniform(1.5, 2.0, 101);
        let r = m.realizations().unwrap();
        let moment = |p: i32| r.iter().map(|z| z.weight * (z.detuning - 1.5).powi(p)).sum::<f64>();
        assert_relative_eq!(moment(0), 1.0, max_relative = 1e-14);
        assert!(moment(1).abs() < 1e-12);
        // the trapezoid rule on a Gaussian is spectrally accurate; truncation at 5σ dominates
        assert_relative_eq!(moment(2), 4.0, max_relative = 1e-4);
        assert!(DetuningModel::uniform(0.0, 1.0, 1).validate().is_err());
        assert!(!m.is_sampled());
    }

    #[test]
    fn zero_sigma_is_single_realization() {
        let m = DetuningModel::monte_carlo(3.0, 0.0, 50, 1);
        let r = m.realizations().unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].detuning, 3.0);
        assert_eq!(r[0].weight, 1.0);
    }

    #[test]
    fn draws_are_seeded_and_order_free() {
        let m = DetuningModel::monte_carlo(0.0, 1.0, 64, 42);
        let a = m.realizations().unwrap();
        let b = m.realizations().unwrap();
        assert_eq!(a, b);
        // the i-th draw does not depend on how many were requested
        let short = DetuningModel { n_realizations: 8, ..m }.realizations().unwrap();
        for (x, y) in short.iter().zip(&a) {
            assert_eq!(x.detuning, y.detuning);
        }
        let other = DetuningModel { seed: 43, ..m }.realizations().unwrap();
        assert_ne!(a[0].detuning, other[0].detuning);
    }

    #[test]
    fn monte_carlo_statistics() {
        let m = DetuningModel::monte_carlo(2.0, 3.0, 20_000, 7);
        let r = m.realizations().unwrap();
        let mean = r.iter().map(|z| z.detuning).sum::<f64>() / r.len() as f64;
        let var = r.iter().map(|z| (z.detuning - mean).powi(2)).sum::<f64>() / (r.len() - 1) as f64;
        assert!((mean - 2.0).abs() < 0.1);
        assert!((var.sqrt() - 3.0).abs() < 0.1);
    }

    #[test]
    fn validation() {
        assert!(EmitterParams::new(0.0, None).is_err());
        assert!(EmitterParams::new(1.0, Some(-1.0)).is_err());
        assert!(DetuningModel::monte_carlo(0.0, -1.0, 10, 0).validate().is_err());
        assert!(DetuningModel::monte_carlo(0.0, 1.0, 0, 0).validate().is_err());
    }
}
