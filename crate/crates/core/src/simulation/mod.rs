//! Synthetic data, oracle selection and the simulation experiments.
//!
//! Points and atoms are standard Gaussian, the signal is a random element
//! `Σ α_i k(·, z_i)` of the kernel's RKHS, and the noise is `N(0, σ²)`.
//! Every draw comes from a `ChaCha8Rng` seeded by the caller, so a config and
//! a seed determine all outputs regardless of the thread count.

mod compare;
mod concentration;
mod curves;
mod jump;

pub use compare::*;
pub use concentration::*;
pub use curves::*;
pub use jump::*;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::criteria::argmin_smallest_df;
use crate::error::{Error, Result};
use crate::kernels::{cross_kernel, KernelKind, PointSet};
use crate::smoothers::SmootherFamily;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub d: usize,
    /// Number of RKHS atoms in the signal.
    pub m: usize,
    /// Noise standard deviation.
    pub sigma: f64,
    pub kernel: KernelKind,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { n: 500, d: 6, m: 10, sigma: 1.0, kernel: KernelKind::ExponentialProduct, seed: 0 }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 10 {
            return Err(Error::invalid(format!("n must be at least 10, got {}", self.n)));
        }
        if self.d == 0 {
            return Err(Error::invalid("d must be positive"));
        }
        if self.m == 0 {
            return Err(Error::invalid("m must be at least 1"));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::invalid(format!("σ must be a finite nonnegative number, got {}", self.sigma)));
        }
        Ok(())
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma * self.sigma
    }

    pub fn with_n(&self, n: usize) -> Self {
        Self { n, ..self.clone() }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub points: PointSet,
    pub f: Vec<f64>,
    pub y: Vec<f64>,
    pub noise: Vec<f64>,
    pub sigma2: f64,
}

fn gaussian_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// `F_a = Σ_i α_i k(x_a, z_i)`.
pub fn rkhs_signal(kind: KernelKind, points: &PointSet, atoms: &PointSet, alpha: &[f64]) -> Result<Vec<f64>> {
    if atoms.len() != alpha.len() {
        return Err(Error::invalid(format!("{} atoms but {} coefficients", atoms.len(), alpha.len())));
    }
    let k = cross_kernel(kind, points, atoms)?;
    Ok((0..points.len()).map(|a| (0..atoms.len()).map(|i| k[(a, i)] * alpha[i]).sum()).collect())
}

/// Draws a dataset whose signal is additive over coordinate groups: each
/// group gets its own `m` atoms and coefficients and contributes
/// `Σ α_i k(x_a[group], z_i)`. Draw order: points, then atoms and
/// coefficients group by group, then noise.
pub fn generate_additive(config: &SimConfig, groups: &[Vec<usize>]) -> Result<SyntheticDataset> {
    config.validate()?;
    if groups.is_empty() {
        return Err(Error::invalid("at least one coordinate group is needed"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let points = PointSet::new(gaussian_vec(config.n * config.d, &mut rng), config.n, config.d)?;
    let mut f = vec![0.0; config.n];
    for g in groups {
        let sub = points.select_columns(g)?;
        let atoms = PointSet::new(gaussian_vec(config.m * g.len(), &mut rng), config.m, g.len())?;
        let alpha = gaussian_vec(config.m, &mut rng);
        for (fa, v) in f.iter_mut().zip(rkhs_signal(config.kernel, &sub, &atoms, &alpha)?) {
            *fa += v;
        }
    }
    let noise: Vec<f64> = gaussian_vec(config.n, &mut rng).into_iter().map(|e| config.sigma * e).collect();
    let y = f.iter().zip(&noise).map(|(a, b)| a + b).collect();
    Ok(SyntheticDataset { points, f, y, noise, sigma2: config.sigma2() })
}

/// Single-kernel dataset on all `d` coordinates.
pub fn generate(config: &SimConfig) -> Result<SyntheticDataset> {
    generate_additive(config, &[(0..config.d).collect()])
}

/// Coordinate groups for the two-kernel setting: first and second half.
pub fn split_halves(d: usize) -> Result<Vec<Vec<usize>>> {
    if d < 2 {
        return Err(Error::invalid(format!("the two-kernel setting needs d >= 2, got {d}")));
    }
    Ok(vec![(0..d / 2).collect(), (d / 2..d).collect()])
}

/// `n⁻¹ ‖F̂ − F‖²`.
pub fn true_risk(fhat: &[f64], f: &[f64]) -> Result<f64> {
    if fhat.len() != f.len() || f.is_empty() {
        return Err(Error::invalid(format!("length mismatch: {} vs {}", fhat.len(), f.len())));
    }
    Ok(fhat.iter().zip(f).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / f.len() as f64)
}

/// `n⁻¹ ‖A_λ Y − F‖²` for every member.
pub fn member_risks(family: &SmootherFamily, f: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    let n = family.n() as f64;
    let cy = family.coefficients(y)?;
    let cf = family.coefficients(f)?;
    Ok((0..family.len()).map(|id| family.distance_sq(id, &cy, &cf) / n).collect())
}

/// Member with the smallest true risk (ties to the smallest df).
pub fn oracle_select(family: &SmootherFamily, f: &[f64], y: &[f64]) -> Result<(usize, f64)> {
    let risks = member_risks(family, f, y)?;
    let id = argmin_smallest_df(family, &risks)?;
    Ok((id, risks[id]))
}

/// Terms of the exact risk and empirical-risk decompositions of one member.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiskTerms {
    /// `‖F̂ − F‖²`
    pub risk: f64,
    /// `‖F̂ − Y‖²`
    pub empirical: f64,
    /// `b(λ) = ‖(A − I)F‖²`
    pub bias: f64,
    /// `‖Aε‖²`
    pub a_eps_sq: f64,
    /// `2⟨Aε, (A − I)F⟩`
    pub cross: f64,
    /// `‖ε‖²`
    pub eps_sq: f64,
    /// `⟨ε, Aε⟩`
    pub eps_a_eps: f64,
    /// `2⟨ε, (I − A)F⟩`
    pub eps_cross: f64,
}

impl RiskTerms {
    /// `b + ‖Aε‖² + 2⟨Aε, (A − I)F⟩`
    pub fn risk_from_terms(&self) -> f64 {
        self.bias + self.a_eps_sq + self.cross
    }

    /// `‖F̂ − F‖² + ‖ε‖² − 2⟨ε, Aε⟩ + 2⟨ε, (I − A)F⟩`
    pub fn empirical_from_terms(&self) -> f64 {
        self.risk + self.eps_sq - 2.0 * self.eps_a_eps + self.eps_cross
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Computes every term from explicit fitted vectors `A F`, `A ε`, `A Y`.
pub fn risk_terms(family: &SmootherFamily, id: usize, f: &[f64], noise: &[f64]) -> Result<RiskTerms> {
    let y: Vec<f64> = f.iter().zip(noise).map(|(a, b)| a + b).collect();
    let af = family.fit(id, f)?;
    let ae = family.fit(id, noise)?;
    let ay = family.fit(id, &y)?;
    let resid_f: Vec<f64> = af.iter().zip(f).map(|(a, b)| a - b).collect();
    let sq = |v: &[f64]| dot(v, v);
    let risk = sq(&ay.iter().zip(f).map(|(a, b)| a - b).collect::<Vec<_>>());
    let empirical = sq(&ay.iter().zip(&y).map(|(a, b)| a - b).collect::<Vec<_>>());
    Ok(RiskTerms {
        risk,
        empirical,
        bias: sq(&resid_f),
        a_eps_sq: sq(&ae),
        cross: 2.0 * dot(&ae, &resid_f),
        eps_sq: sq(noise),
        eps_a_eps: dot(noise, &ae),
        eps_cross: -2.0 * dot(noise, &resid_f),
    })
}

/// `ChaCha8Rng` for replication `r` of a run seeded with `seed`.
pub(crate) fn replication_seed(seed: u64, r: usize) -> u64 {
    seed.wrapping_add(r as u64)
}
