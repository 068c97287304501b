use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::Table;
use crate::kernels::{build_kernel_matrix, KernelSpec};
use crate::smoothers::{LambdaGrid, SmootherFamily};

use super::{generate, SimConfig};

/// Expected-risk terms of one member, all divided by `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub member: usize,
    pub df: f64,
    /// `b(λ)/n`
    pub bias: f64,
    /// `tr(AᵀA) σ²/n`
    pub variance: f64,
    /// `bias + variance`, the expected risk.
    pub risk: f64,
    /// `(2 tr A − tr AᵀA) σ²/n`
    pub minimal_penalty: f64,
    /// `2 tr A σ²/n`
    pub ideal_penalty: f64,
    /// `bias − minimal_penalty`: expected empirical risk minus `σ²`.
    pub empirical: f64,
}

/// Bias, variance and penalty curves over the family, sorted by df.
pub fn bias_variance_curves(family: &SmootherFamily, f: &[f64], sigma2: f64) -> Result<Vec<CurvePoint>> {
    if !(sigma2 >= 0.0) {
        return Err(Error::invalid(format!("σ² must be nonnegative, got {sigma2}")));
    }
    let n = family.n() as f64;
    let cf = family.coefficients(f)?;
    Ok(family
        .order_by_df()
        .into_iter()
        .map(|id| {
            let s = family.stats(id);
            let bias = family.distance_sq(id, &cf, &cf) / n;
            let variance = s.tr_ata * sigma2 / n;
            let minimal_penalty = s.minpen_factor * sigma2 / n;
            CurvePoint {
                member: id,
                df: s.df,
                bias,
                variance,
                risk: bias + variance,
                minimal_penalty,
                ideal_penalty: 2.0 * s.df * sigma2 / n,
                empirical: bias - minimal_penalty,
            }
        })
        .collect())
}

pub fn curves_table(points: &[CurvePoint]) -> Table {
    let mut t = Table::new([
        "member",
        "df",
        "bias",
        "variance",
        "risk",
        "minimal_penalty",
        "ideal_penalty",
        "expected_empirical_risk",
    ]);
    for p in points {
        t.push(vec![
            p.member.into(),
            p.df.into(),
            p.bias.into(),
            p.variance.into(),
            p.risk.into(),
            p.minimal_penalty.into(),
            p.ideal_penalty.into(),
            p.empirical.into(),
        ]);
    }
    t
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CurvesConfig {
    pub sim: SimConfig,
    pub lambda_grid_size: Option<usize>,
}

/// Curves of the single-kernel ridge path on one simulated signal.
pub fn run_curves_experiment(config: &CurvesConfig) -> Result<Vec<CurvePoint>> {
    let ds = generate(&config.sim)?;
    let k = build_kernel_matrix(&KernelSpec::Function(config.sim.kernel), &ds.points)?;
    let grid = config.lambda_grid_size.map_or(LambdaGrid::Default, LambdaGrid::Size);
    let family = SmootherFamily::ridge_path(k, &grid)?;
    bias_variance_curves(&family, &ds.f, ds.sigma2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_shapes() {
        let cfg = CurvesConfig {
            sim: SimConfig { n: 60, d: 3, seed: 5, ..SimConfig::default() },
            lambda_grid_size: Some(50),
        };
        let pts = run_curves_experiment(&cfg).unwrap();
        assert_eq!(pts.len(), 50);
        for w in pts.windows(2) {
            assert!(w[1].df >= w[0].df);
            assert!(w[1].bias <= w[0].bias + 1e-12);
            assert!(w[1].variance >= w[0].variance - 1e-12);
        }
        for p in &pts {
            assert!((p.risk - (p.bias + p.variance)).abs() <= 1e-12 * p.risk.max(1.0));
            assert!(p.minimal_penalty <= p.ideal_penalty + 1e-15);
        }
        assert_eq!(curves_table(&pts).len(), 50);
    }
}
