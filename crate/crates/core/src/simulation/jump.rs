use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{default_ratio, penalty_path, CGrid, Jump};
use crate::criteria::PenaltyRule;
use crate::error::{Error, Result};
use crate::io::{Cell, Table};
use crate::kernels::{build_kernel_matrix, KernelSpec};
use crate::mkl::{mkl_gradient_descent, DescentOptions, MklObjective, MklPenalty};
use crate::smoothers::{LambdaGrid, MemberParam, SmootherFamily};

use super::{generate, generate_additive, split_halves, SimConfig, SyntheticDataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpConfig {
    pub sim: SimConfig,
    /// Points per ridge path; `None` uses `max(n, 100)`.
    pub lambda_grid_size: Option<usize>,
    /// Range of `ln(C/σ²)` covered by the C-grid.
    pub ln_c_min: f64,
    pub ln_c_max: f64,
    /// C-grid ratio; `None` uses `exp(n^{-1/4})`.
    pub c_grid_ratio: Option<f64>,
    /// Also run the two-kernel variants.
    pub mkl: bool,
    /// Dimension of the two-kernel data (kernels on each half).
    pub mkl_d: usize,
    /// Number of weight vectors `(t, 1 − t)` in the discrete η-grid.
    pub mkl_eta_grid: usize,
    pub mkl_gradient: bool,
    pub gradient_max_iter: usize,
}

impl Default for JumpConfig {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            lambda_grid_size: None,
            ln_c_min: -4.0,
            ln_c_max: 4.0,
            c_grid_ratio: None,
            mkl: true,
            mkl_d: 8,
            mkl_eta_grid: 21,
            mkl_gradient: true,
            gradient_max_iter: 5,
        }
    }
}

impl JumpConfig {
    fn lambda_grid(&self) -> LambdaGrid {
        self.lambda_grid_size.map_or(LambdaGrid::Default, LambdaGrid::Size)
    }

    fn c_grid(&self, n: usize, sigma2: f64) -> Result<CGrid> {
        if !(sigma2 > 0.0) {
            return Err(Error::invalid("the jump experiment needs σ > 0"));
        }
        if !(self.ln_c_max > self.ln_c_min) {
            return Err(Error::invalid(format!("empty ln(C/σ²) range [{}, {}]", self.ln_c_min, self.ln_c_max)));
        }
        let ratio = self.c_grid_ratio.unwrap_or_else(|| default_ratio(n));
        CGrid::geometric(sigma2 * self.ln_c_min.exp(), sigma2 * self.ln_c_max.exp(), ratio)
    }
}

/// Selected df along a C-grid under the minimal penalty and under `C·df`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpCurves {
    pub c: Vec<f64>,
    pub df_minimal: Vec<f64>,
    pub df_half_ideal: Vec<f64>,
}

/// Largest consecutive df drop (first one on ties).
pub fn largest_drop(c: &[f64], df: &[f64]) -> Option<Jump> {
    let mut best: Option<Jump> = None;
    for i in 0..df.len().saturating_sub(1) {
        let size = df[i] - df[i + 1];
        if best.is_none_or(|b| size > b.size) {
            best = Some(Jump { index: i, c_low: c[i], c_high: c[i + 1], size });
        }
    }
    best
}

impl JumpCurves {
    pub fn minimal_jump(&self) -> Option<Jump> {
        largest_drop(&self.c, &self.df_minimal)
    }

    pub fn half_ideal_jump(&self) -> Option<Jump> {
        largest_drop(&self.c, &self.df_half_ideal)
    }
}

pub fn jump_curves(family: &SmootherFamily, y: &[f64], grid: &CGrid) -> Result<JumpCurves> {
    let rss = family.residual_sums(y)?;
    let min = penalty_path(family, &rss, grid, PenaltyRule::Minimal)?;
    let half = penalty_path(family, &rss, grid, PenaltyRule::HalfIdeal)?;
    Ok(JumpCurves { c: grid.values().to_vec(), df_minimal: min.dfs(), df_half_ideal: half.dfs() })
}

/// Continuous-η curves: at every C, projected gradient descent on η (with
/// `λ = 1/n`) started from the discrete-grid selection under the same penalty.
pub fn gradient_jump_curves(family: &SmootherFamily, y: &[f64], grid: &CGrid, max_iter: usize) -> Result<JumpCurves> {
    let kernels = family.base_kernels();
    if kernels.is_empty() {
        return Err(Error::Unsupported("gradient curves need a multiple-kernel family".into()));
    }
    let n = family.n();
    let rss = family.residual_sums(y)?;
    let lambda = 1.0 / n as f64;
    let opts = DescentOptions { max_iter, ..DescentOptions::default() };
    let run = |c: f64, penalty: MklPenalty, rule: PenaltyRule| -> Result<f64> {
        let start = crate::criteria::argmin_over_family(family, &rss, rule)?;
        let MemberParam::Mkl { eta, lambda: l0 } = &family.member(start).param else {
            return Err(Error::Unsupported("gradient curves need a multiple-kernel family".into()));
        };
        // A depends on η / (nλ) only
        let eta0: Vec<f64> = eta.iter().map(|e| e / (n as f64 * l0)).collect();
        let obj = MklObjective::new(kernels, y, lambda, c).with_penalty(penalty);
        Ok(mkl_gradient_descent(&obj, &eta0, &opts)?.stats.df)
    };
    let rows = grid
        .values()
        .par_iter()
        .map(|&c| {
            Ok((
                run(c, MklPenalty::Minimal, PenaltyRule::Minimal(c))?,
                run(c, MklPenalty::HalfIdeal, PenaltyRule::HalfIdeal(c))?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(JumpCurves {
        c: grid.values().to_vec(),
        df_minimal: rows.iter().map(|r| r.0).collect(),
        df_half_ideal: rows.iter().map(|r| r.1).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveSummary {
    pub variant: String,
    pub sigma2: f64,
    pub minimal: Option<Jump>,
    pub half_ideal: Option<Jump>,
    pub family_min_df: f64,
    pub family_max_df: f64,
}

impl CurveSummary {
    fn new(variant: &str, sigma2: f64, curves: &JumpCurves, family: &SmootherFamily) -> Self {
        Self {
            variant: variant.into(),
            sigma2,
            minimal: curves.minimal_jump(),
            half_ideal: curves.half_ideal_jump(),
            family_min_df: family.stats(family.min_df_member()).df,
            family_max_df: family.stats(family.max_df_member()).df,
        }
    }

    /// `ln(C*/σ²)` at the largest minimal-penalty drop.
    pub fn ln_location(&self) -> Option<f64> {
        self.minimal.map(|j| (j.location() / self.sigma2).ln())
    }

    /// Half-ideal drop over minimal-penalty drop.
    pub fn drop_ratio(&self) -> Option<f64> {
        match (self.minimal, self.half_ideal) {
            (Some(m), Some(h)) if m.size > 0.0 => Some(h.size.max(0.0) / m.size),
            _ => None,
        }
    }
}

/// Single-kernel ridge curves for one dataset.
pub fn single_kernel_jump(config: &JumpConfig) -> Result<(SyntheticDataset, JumpCurves, CurveSummary)> {
    let ds = generate(&config.sim)?;
    let k = build_kernel_matrix(&KernelSpec::Function(config.sim.kernel), &ds.points)?;
    let family = SmootherFamily::ridge_path(k, &config.lambda_grid())?;
    let grid = config.c_grid(config.sim.n, ds.sigma2)?;
    let curves = jump_curves(&family, &ds.y, &grid)?;
    let summary = CurveSummary::new("single", ds.sigma2, &curves, &family);
    Ok((ds, curves, summary))
}

/// Weight vectors `(t, 1 − t)`, `t = i / (q − 1)`.
pub fn simplex_etas(q: usize) -> Result<Vec<Vec<f64>>> {
    if q < 2 {
        return Err(Error::invalid(format!("the η-grid needs at least 2 points, got {q}")));
    }
    Ok((0..q).map(|i| i as f64 / (q - 1) as f64).map(|t| vec![t, 1.0 - t]).collect())
}

/// Two-kernel family (kernels on each half of the coordinates) and data.
pub fn mkl_family(sim: &SimConfig, eta_grid: usize, lambda: &LambdaGrid) -> Result<(SyntheticDataset, SmootherFamily)> {
    let groups = split_halves(sim.d)?;
    let ds = generate_additive(sim, &groups)?;
    let spec = KernelSpec::Function(sim.kernel);
    let kernels =
        groups.iter().map(|g| build_kernel_matrix(&spec, &ds.points.select_columns(g)?)).collect::<Result<Vec<_>>>()?;
    let family = SmootherFamily::mkl_grid(kernels, &simplex_etas(eta_grid)?, lambda)?;
    Ok((ds, family))
}

#[derive(Debug, Clone)]
pub struct JumpExperiment {
    /// Columns: variant, ln_C_over_sigma2, C, df_minimal, df_half_ideal.
    pub curves: Table,
    pub summaries: Vec<CurveSummary>,
}

impl JumpExperiment {
    pub fn summary_table(&self) -> Table {
        let mut t = Table::new([
            "variant",
            "family_min_df",
            "family_max_df",
            "largest_drop_minimal",
            "ln_location_minimal",
            "largest_drop_half_ideal",
            "drop_ratio",
        ]);
        for s in &self.summaries {
            t.push(vec![
                s.variant.clone().into(),
                s.family_min_df.into(),
                s.family_max_df.into(),
                s.minimal.map(|j| j.size).into(),
                s.ln_location().into(),
                s.half_ideal.map(|j| j.size).into(),
                s.drop_ratio().into(),
            ]);
        }
        t
    }
}

fn push_curves(table: &mut Table, variant: &str, sigma2: f64, curves: &JumpCurves) {
    for i in 0..curves.c.len() {
        table.push(vec![
            Cell::from(variant),
            (curves.c[i] / sigma2).ln().into(),
            curves.c[i].into(),
            curves.df_minimal[i].into(),
            curves.df_half_ideal[i].into(),
        ]);
    }
}

/// Selected df against `ln(C/σ²)` for the single-kernel ridge path and,
/// optionally, the two-kernel discrete grid and gradient-descent variants.
pub fn run_jump_experiment(config: &JumpConfig) -> Result<JumpExperiment> {
    let mut table = Table::new(["variant", "ln_C_over_sigma2", "C", "df_minimal", "df_half_ideal"]);
    let (ds, curves, summary) = single_kernel_jump(config)?;
    push_curves(&mut table, "single", ds.sigma2, &curves);
    let mut summaries = vec![summary];
    if config.mkl {
        let sim = SimConfig { d: config.mkl_d, ..config.sim.clone() };
        let (ds, family) = mkl_family(&sim, config.mkl_eta_grid, &config.lambda_grid())?;
        let grid = config.c_grid(sim.n, ds.sigma2)?;
        let curves = jump_curves(&family, &ds.y, &grid)?;
        push_curves(&mut table, "mkl-grid", ds.sigma2, &curves);
        summaries.push(CurveSummary::new("mkl-grid", ds.sigma2, &curves, &family));
        if config.mkl_gradient {
            let curves = gradient_jump_curves(&family, &ds.y, &grid, config.gradient_max_iter)?;
            push_curves(&mut table, "mkl-gradient", ds.sigma2, &curves);
            summaries.push(CurveSummary::new("mkl-gradient", ds.sigma2, &curves, &family));
        }
    }
    Ok(JumpExperiment { curves: table, summaries })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(n: usize, seed: u64) -> JumpConfig {
        JumpConfig {
            sim: SimConfig { n, d: 3, seed, ..SimConfig::default() },
            lambda_grid_size: Some(60),
            mkl_eta_grid: 5,
            gradient_max_iter: 3,
            ..JumpConfig::default()
        }
    }

    #[test]
    fn extremes_of_the_penalty_range() {
        let cfg = JumpConfig { ln_c_min: -12.0, ln_c_max: 12.0, ..quick(80, 2) };
        let (_, curves, s) = single_kernel_jump(&cfg).unwrap();
        let last = curves.df_minimal.len() - 1;
        assert!(curves.df_minimal[0] > 0.9 * s.family_max_df);
        assert!(curves.df_minimal[last] < s.family_min_df + 1.0);
        assert!(curves.df_half_ideal[last] < s.family_min_df + 1.0);
    }

    #[test]
    fn largest_drop_picks_first_maximum() {
        let c = [1.0, 2.0, 3.0, 4.0, 5.0];
        let j = largest_drop(&c, &[10.0, 6.0, 6.0, 2.0, 2.0]).unwrap();
        assert_eq!((j.index, j.size), (0, 4.0));
        assert!(largest_drop(&c[..1], &[1.0]).is_none());
    }

    #[test]
    fn full_experiment_has_all_variants() {
        let exp =
            run_jump_experiment(&JumpConfig { sim: SimConfig { d: 4, ..quick(40, 1).sim }, mkl_d: 4, ..quick(40, 1) })
                .unwrap();
        let variants: Vec<_> = exp.summaries.iter().map(|s| s.variant.as_str()).collect();
        assert_eq!(variants, ["single", "mkl-grid", "mkl-gradient"]);
        assert_eq!(exp.summary_table().len(), 3);
        let per_variant = exp.curves.len() / 3;
        assert_eq!(exp.curves.len(), 3 * per_variant);
        for df in exp.curves.floats("df_minimal") {
            assert!((0.0..=40.0 + 1e-9).contains(&df));
        }
    }

    #[test]
    fn sigma_zero_is_rejected() {
        let mut cfg = quick(30, 1);
        cfg.sim.sigma = 0.0;
        assert!(single_kernel_jump(&cfg).is_err());
    }
}
