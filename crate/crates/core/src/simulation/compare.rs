use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate, CalibrationConfig};
use crate::criteria::{argmin_over_family, argmin_smallest_df, kfold_cv_scores, PenaltyRule};
use crate::error::{Error, Result};
use crate::io::{Cell, Table};
use crate::kernels::{build_kernel_matrix, KernelMatrix, KernelSpec};
use crate::mkl::{group_lasso_weights, DescentOptions};
use crate::smoothers::{geometric_grid, LambdaGrid, MemberParam, SmootherFamily};

use super::{generate, member_risks, mkl_family, oracle_select, replication_seed, true_risk, SimConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Minimal-penalty variance estimate plugged into C_L.
    Minpen,
    Gcv,
    /// 10-fold cross-validation (the fold count is configurable).
    Cv10,
    /// C_L with the true σ².
    #[serde(alias = "mallows-known-sigma2")]
    Mallows,
    /// Group-lasso kernel weights per λ, λ chosen by cross-validation.
    MklCv,
    /// Minimal-penalty calibration of the ridge path of `K_1 + K_2`.
    MinpenSumKernel,
}

impl Method {
    pub const ALL: [Method; 6] =
        [Method::Minpen, Method::Gcv, Method::Cv10, Method::Mallows, Method::MklCv, Method::MinpenSumKernel];

    pub fn name(self) -> &'static str {
        match self {
            Method::Minpen => "minpen",
            Method::Gcv => "gcv",
            Method::Cv10 => "cv10",
            Method::Mallows => "mallows",
            Method::MklCv => "mkl-cv",
            Method::MinpenSumKernel => "minpen-sum-kernel",
        }
    }

    /// Whether the method has a meaning in `setting`.
    pub fn applies_to(self, setting: Setting) -> bool {
        !matches!((self, setting), (Method::MklCv | Method::MinpenSumKernel, Setting::Single))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "mallows-known-sigma2" | "mallows-known-σ²" => Ok(Method::Mallows),
            t => Method::ALL
                .into_iter()
                .find(|m| m.name() == t)
                .ok_or_else(|| Error::invalid(format!("unknown method {t:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Setting {
    /// Kernel ridge on one kernel; ratios against the oracle.
    Single,
    /// Two kernels; ratios against C_L with known σ².
    Mkl,
}

impl Setting {
    pub fn name(self) -> &'static str {
        match self {
            Setting::Single => "single",
            Setting::Mkl => "mkl",
        }
    }

    fn reference(self) -> &'static str {
        match self {
            Setting::Single => "oracle",
            Setting::Mkl => "mallows",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    /// `n` is taken from `n_list`; `d` applies to the single-kernel setting.
    pub sim: SimConfig,
    pub n_list: Vec<usize>,
    pub reps: usize,
    pub methods: Vec<Method>,
    pub settings: Vec<Setting>,
    pub cv_folds: usize,
    pub lambda_grid_size: Option<usize>,
    pub mkl_d: usize,
    pub mkl_eta_grid: usize,
    /// Number of λ values tried by `mkl-cv`.
    pub mkl_cv_lambdas: usize,
    pub mkl_cv_max_iter: usize,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            sim: SimConfig { d: 4, ..SimConfig::default() },
            n_list: vec![100, 200, 500],
            reps: 20,
            methods: Method::ALL.to_vec(),
            settings: vec![Setting::Single, Setting::Mkl],
            cv_folds: 10,
            lambda_grid_size: None,
            mkl_d: 8,
            mkl_eta_grid: 11,
            mkl_cv_lambdas: 10,
            mkl_cv_max_iter: 30,
        }
    }
}

impl CompareConfig {
    fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() || self.reps == 0 || self.methods.is_empty() || self.settings.is_empty() {
            return Err(Error::invalid("n_list, reps, methods and settings must be non-empty"));
        }
        if !(self.sim.sigma > 0.0) {
            return Err(Error::invalid("the comparison needs σ > 0 (risk ratios against a zero oracle)"));
        }
        for &n in &self.n_list {
            self.sim.with_n(n).validate()?;
        }
        Ok(())
    }

    fn lambda_grid(&self) -> LambdaGrid {
        self.lambda_grid_size.map_or(LambdaGrid::Default, LambdaGrid::Size)
    }
}

/// Result of one method on one replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodOutcome {
    pub method: Method,
    pub selected: Option<MemberParam>,
    pub df: Option<f64>,
    pub risk: Option<f64>,
    /// Risk over the setting's reference risk.
    pub ratio: Option<f64>,
    pub sigma2_hat: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationRecord {
    pub setting: Setting,
    pub n: usize,
    pub replication: usize,
    pub seed: u64,
    /// Best risk over the family.
    pub oracle_risk: f64,
    /// Denominator of the ratios (the oracle, or C_L with known σ²).
    pub reference_risk: f64,
    pub outcomes: Vec<MethodOutcome>,
}

struct Selection {
    selected: MemberParam,
    df: f64,
    risk: f64,
    sigma2_hat: Option<f64>,
}

fn pick(family: &SmootherFamily, risks: &[f64], id: usize) -> Selection {
    Selection { selected: family.member(id).param.clone(), df: family.stats(id).df, risk: risks[id], sigma2_hat: None }
}

fn minpen_selection(family: &SmootherFamily, y: &[f64], risks: &[f64]) -> Result<Selection> {
    let res = calibrate(family, y, &CalibrationConfig::default())?;
    Ok(Selection { sigma2_hat: Some(res.sigma2_hat), ..pick(family, risks, res.selected_lambda) })
}

fn cv_selection(family: &SmootherFamily, y: &[f64], risks: &[f64], folds: usize, seed: u64) -> Result<Selection> {
    let scores = kfold_cv_scores(family, y, folds, seed)?;
    Ok(pick(family, risks, argmin_smallest_df(family, &scores)?))
}

fn sum_kernel_selection(kernels: &[KernelMatrix], y: &[f64], f: &[f64], grid: &LambdaGrid) -> Result<Selection> {
    let sum = KernelMatrix::weighted_sum(kernels, &vec![1.0; kernels.len()])?;
    let family = SmootherFamily::ridge_path(sum, grid)?;
    let res = calibrate(&family, y, &CalibrationConfig::default())?;
    let risk = true_risk(&family.fit(res.selected_lambda, y)?, f)?;
    Ok(Selection { selected: res.selected_param, df: res.df_selected, risk, sigma2_hat: Some(res.sigma2_hat) })
}

/// Group-lasso weights `η̂(λ)` on a geometric λ-grid, then `k`-fold CV over
/// the resulting smoothers `A_{η̂(λ), λ}`.
fn mkl_cv_selection(
    kernels: &[KernelMatrix],
    y: &[f64],
    f: &[f64],
    config: &CompareConfig,
    seed: u64,
) -> Result<Selection> {
    let n = y.len();
    let scale = kernels.iter().map(|k| k.trace()).sum::<f64>() / n as f64;
    let opts = DescentOptions { max_iter: config.mkl_cv_max_iter, rel_tol: 1e-8 };
    let mut etas = Vec::new();
    for nl in geometric_grid(1e-3 * scale, 10.0 * scale, config.mkl_cv_lambdas.max(2)) {
        let lambda = nl / n as f64;
        let eta = group_lasso_weights(kernels, y, lambda, &opts)?;
        // A_{η,λ} = A_{η/(nλ), 1/n}
        etas.push(eta.iter().map(|e| e / nl).collect::<Vec<f64>>());
    }
    let family = SmootherFamily::mkl_grid(kernels.to_vec(), &etas, &LambdaGrid::Explicit(vec![1.0 / n as f64]))?;
    let risks = member_risks(&family, f, y)?;
    cv_selection(&family, y, &risks, config.cv_folds, seed)
}

fn outcome(method: Method, result: Result<Selection>, reference: f64) -> MethodOutcome {
    match result {
        Ok(s) => MethodOutcome {
            method,
            ratio: Some(s.risk / reference),
            selected: Some(s.selected),
            df: Some(s.df),
            risk: Some(s.risk),
            sigma2_hat: s.sigma2_hat,
            failure: None,
        },
        Err(e) => MethodOutcome {
            method,
            selected: None,
            df: None,
            risk: None,
            ratio: None,
            sigma2_hat: None,
            failure: Some(e.to_string()),
        },
    }
}

/// One replication of one setting. Method failures are recorded, while
/// failures to build the data or the family abort the run.
pub fn run_replication(config: &CompareConfig, setting: Setting, n: usize, r: usize) -> Result<ReplicationRecord> {
    let seed = replication_seed(config.sim.seed, r);
    let sigma2 = config.sim.sigma2();
    let methods: Vec<Method> = config.methods.iter().copied().filter(|m| m.applies_to(setting)).collect();
    let (ds, family) = match setting {
        Setting::Single => {
            let sim = config.sim.with_n(n).with_seed(seed);
            let ds = generate(&sim)?;
            let k = build_kernel_matrix(&KernelSpec::Function(sim.kernel), &ds.points)?;
            (ds, SmootherFamily::ridge_path(k, &config.lambda_grid())?)
        }
        Setting::Mkl => {
            let sim = SimConfig { d: config.mkl_d, ..config.sim.with_n(n).with_seed(seed) };
            mkl_family(&sim, config.mkl_eta_grid, &config.lambda_grid())?
        }
    };
    let (y, f) = (&ds.y, &ds.f);
    let risks = member_risks(&family, f, y)?;
    let rss = family.residual_sums(y)?;
    let (_, oracle_risk) = oracle_select(&family, f, y)?;
    let mallows = argmin_over_family(&family, &rss, PenaltyRule::Ideal(sigma2)).map(|id| pick(&family, &risks, id));
    let reference_risk = match setting {
        Setting::Single => oracle_risk,
        Setting::Mkl => mallows.as_ref().map_err(|e| Error::Numerical(format!("reference C_L failed: {e}")))?.risk,
    };
    let mut mallows = Some(mallows);
    let outcomes = methods
        .iter()
        .map(|&m| {
            let result = match m {
                Method::Minpen => minpen_selection(&family, y, &risks),
                Method::Gcv => argmin_over_family(&family, &rss, PenaltyRule::Gcv).map(|id| pick(&family, &risks, id)),
                Method::Cv10 => cv_selection(&family, y, &risks, config.cv_folds, seed),
                Method::Mallows => mallows.take().expect("mallows appears once"),
                Method::MklCv => mkl_cv_selection(family.base_kernels(), y, f, config, seed),
                Method::MinpenSumKernel => sum_kernel_selection(family.base_kernels(), y, f, &config.lambda_grid()),
            };
            outcome(m, result, reference_risk)
        })
        .collect();
    Ok(ReplicationRecord { setting, n, replication: r, seed, oracle_risk, reference_risk, outcomes })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub setting: Setting,
    pub n: usize,
    pub method: Method,
    pub count: usize,
    pub failures: usize,
    pub mean_ratio: f64,
    pub se_ratio: f64,
    pub median_ratio: f64,
    pub mean_risk: f64,
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Mean, standard error, median and failure count of the ratios of each
/// (setting, n, method), in record order.
pub fn summarize(records: &[ReplicationRecord]) -> Vec<MethodSummary> {
    let mut keys: Vec<(Setting, usize, Method)> = Vec::new();
    for rec in records {
        for o in &rec.outcomes {
            let key = (rec.setting, rec.n, o.method);
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
    }
    keys.into_iter()
        .map(|(setting, n, method)| {
            let outs: Vec<&MethodOutcome> = records
                .iter()
                .filter(|r| r.setting == setting && r.n == n)
                .flat_map(|r| r.outcomes.iter().filter(|o| o.method == method))
                .collect();
            let mut ratios: Vec<f64> = outs.iter().filter_map(|o| o.ratio).collect();
            let risks: Vec<f64> = outs.iter().filter_map(|o| o.risk).collect();
            let k = ratios.len();
            let mean = ratios.iter().sum::<f64>() / k as f64;
            let se = if k > 1 {
                (ratios.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (k - 1) as f64 / k as f64).sqrt()
            } else {
                f64::NAN
            };
            MethodSummary {
                setting,
                n,
                method,
                count: k,
                failures: outs.len() - k,
                mean_ratio: mean,
                se_ratio: se,
                median_ratio: median(&mut ratios),
                mean_risk: risks.iter().sum::<f64>() / risks.len() as f64,
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ComparisonExperiment {
    pub records: Vec<ReplicationRecord>,
    pub summaries: Vec<MethodSummary>,
}

impl ComparisonExperiment {
    pub fn summary_table(&self) -> Table {
        let mut t = Table::new([
            "setting",
            "n",
            "method",
            "reference",
            "count",
            "failures",
            "mean_ratio",
            "se_ratio",
            "median_ratio",
            "mean_risk",
        ]);
        for s in &self.summaries {
            t.push(vec![
                s.setting.name().into(),
                s.n.into(),
                s.method.name().into(),
                s.setting.reference().into(),
                s.count.into(),
                s.failures.into(),
                s.mean_ratio.into(),
                s.se_ratio.into(),
                s.median_ratio.into(),
                s.mean_risk.into(),
            ]);
        }
        t
    }

    /// One row per (replication, method).
    pub fn records_table(&self) -> Table {
        let mut t = Table::new([
            "setting",
            "n",
            "replication",
            "seed",
            "method",
            "lambda",
            "eta1",
            "eta2",
            "df",
            "risk",
            "oracle_risk",
            "reference_risk",
            "ratio",
            "sigma2_hat",
            "failure",
        ]);
        for r in &self.records {
            for o in &r.outcomes {
                let (lambda, eta1, eta2) = match &o.selected {
                    Some(MemberParam::Ridge { lambda }) => (Some(*lambda), None, None),
                    Some(MemberParam::Mkl { eta, lambda }) => {
                        (Some(*lambda), eta.first().copied(), eta.get(1).copied())
                    }
                    _ => (None, None, None),
                };
                t.push(vec![
                    r.setting.name().into(),
                    r.n.into(),
                    r.replication.into(),
                    Cell::Int(r.seed as i64),
                    o.method.name().into(),
                    lambda.into(),
                    eta1.into(),
                    eta2.into(),
                    o.df.into(),
                    o.risk.into(),
                    r.oracle_risk.into(),
                    r.reference_risk.into(),
                    o.ratio.into(),
                    o.sigma2_hat.into(),
                    o.failure.clone().into(),
                ]);
            }
        }
        t
    }
}

/// Every (setting, n, replication) job, run in parallel and collected in
/// job order.
pub fn run_comparison_experiment(config: &CompareConfig) -> Result<ComparisonExperiment> {
    config.validate()?;
    let mut jobs = Vec::new();
    for &setting in &config.settings {
        if !config.methods.iter().any(|m| m.applies_to(setting)) {
            continue;
        }
        for &n in &config.n_list {
            for r in 0..config.reps {
                jobs.push((setting, n, r));
            }
        }
    }
    let records =
        jobs.par_iter().map(|&(setting, n, r)| run_replication(config, setting, n, r)).collect::<Result<Vec<_>>>()?;
    let summaries = summarize(&records);
    Ok(ComparisonExperiment { records, summaries })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> CompareConfig {
        CompareConfig {
            sim: SimConfig { n: 60, d: 2, ..SimConfig::default() },
            n_list: vec![60],
            reps: 3,
            lambda_grid_size: Some(40),
            mkl_d: 4,
            mkl_eta_grid: 3,
            mkl_cv_lambdas: 3,
            mkl_cv_max_iter: 5,
            cv_folds: 5,
            ..CompareConfig::default()
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert_eq!("mallows-known-sigma2".parse::<Method>().unwrap(), Method::Mallows);
        assert!("lasso".parse::<Method>().is_err());
    }

    #[test]
    fn single_setting_ratios_are_at_least_one() {
        let cfg = CompareConfig { settings: vec![Setting::Single], ..tiny() };
        let exp = run_comparison_experiment(&cfg).unwrap();
        assert_eq!(exp.records.len(), 3);
        for r in &exp.records {
            assert_eq!(r.outcomes.len(), 4);
            for o in &r.outcomes {
                if let Some(ratio) = o.ratio {
                    assert!(ratio >= 1.0 - 1e-12, "{:?} ratio {ratio}", o.method);
                }
            }
        }
        assert_eq!(exp.summaries.len(), 4);
        assert_eq!(exp.summary_table().len(), 4);
        assert_eq!(exp.records_table().len(), 12);
    }

    #[test]
    fn mkl_setting_runs_every_method() {
        let cfg = CompareConfig { settings: vec![Setting::Mkl], reps: 1, ..tiny() };
        let exp = run_comparison_experiment(&cfg).unwrap();
        let rec = &exp.records[0];
        assert_eq!(rec.outcomes.len(), 6);
        let mallows = rec.outcomes.iter().find(|o| o.method == Method::Mallows).unwrap();
        assert_eq!(mallows.ratio, Some(1.0));
        assert!(rec.oracle_risk <= rec.reference_risk);
    }

    #[test]
    fn single_method_table() {
        let cfg = CompareConfig { methods: vec![Method::Minpen], reps: 2, ..tiny() };
        let exp = run_comparison_experiment(&cfg).unwrap();
        assert!(exp.summaries.iter().all(|s| s.method == Method::Minpen));
        // the mkl setting has minpen too
        assert_eq!(exp.summaries.len(), 2);
    }

    #[test]
    fn summary_statistics() {
        let mut v = [3.0, 1.0, 2.0, 10.0];
        assert_eq!(median(&mut v), 2.5);
        assert_eq!(median(&mut [4.0]), 4.0);
        assert!(median(&mut []).is_nan());
    }
}
