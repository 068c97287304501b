//! Flat JSON configs, one per command. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use minpen::calibration::{default_ratio, CGrid, CalibrationConfig, VarianceRule, DEFAULT_XI};
use minpen::kernels::KernelKind;
use minpen::simulation::{CompareConfig, ConcentrationConfig, CurvesConfig, JumpConfig, Method, Setting, SimConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::input(format!("invalid config {}: {e}", path.display())))
}

fn require_seed(seed: Option<u64>) -> Result<u64, CliError> {
    seed.ok_or_else(|| CliError::input("a seed is required: pass --seed or set \"seed\" in the config"))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateFile {
    pub kernel: KernelKind,
    /// Precomputed n×n kernel CSV used instead of `kernel`.
    pub kernel_file: Option<PathBuf>,
    pub lambda_grid_size: Option<usize>,
    pub rule: VarianceRule,
    pub xi: f64,
    /// Explicit C-grid bounds; both or neither.
    pub c_min: Option<f64>,
    pub c_max: Option<f64>,
    pub c_grid_ratio: Option<f64>,
    /// Known noise variance, only used to label the path.
    pub sigma2: Option<f64>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

impl Default for CalibrateFile {
    fn default() -> Self {
        Self {
            kernel: KernelKind::ExponentialProduct,
            kernel_file: None,
            lambda_grid_size: None,
            rule: VarianceRule::Auto,
            xi: DEFAULT_XI,
            c_min: None,
            c_max: None,
            c_grid_ratio: None,
            sigma2: None,
            seed: None,
            threads: None,
        }
    }
}

impl CalibrateFile {
    pub fn calibration_config(&self, n: usize) -> Result<CalibrationConfig, CliError> {
        let grid = match (self.c_min, self.c_max) {
            (Some(lo), Some(hi)) => {
                Some(CGrid::geometric(lo, hi, self.c_grid_ratio.unwrap_or_else(|| default_ratio(n)))?)
            }
            (None, None) => None,
            _ => return Err(CliError::input("c_min and c_max must be given together")),
        };
        Ok(CalibrationConfig { grid, rule: self.rule, xi: self.xi })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JumpFile {
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub sigma: f64,
    pub kernel: KernelKind,
    pub seed: Option<u64>,
    pub lambda_grid_size: Option<usize>,
    pub ln_c_min: f64,
    pub ln_c_max: f64,
    pub c_grid_ratio: Option<f64>,
    pub mkl: bool,
    pub mkl_d: usize,
    pub mkl_eta_grid: usize,
    pub mkl_gradient: bool,
    pub gradient_max_iter: usize,
    pub threads: Option<usize>,
}

impl Default for JumpFile {
    fn default() -> Self {
        let j = JumpConfig::default();
        Self {
            n: j.sim.n,
            d: j.sim.d,
            m: j.sim.m,
            sigma: j.sim.sigma,
            kernel: j.sim.kernel,
            seed: None,
            lambda_grid_size: j.lambda_grid_size,
            ln_c_min: j.ln_c_min,
            ln_c_max: j.ln_c_max,
            c_grid_ratio: j.c_grid_ratio,
            mkl: j.mkl,
            mkl_d: j.mkl_d,
            mkl_eta_grid: j.mkl_eta_grid,
            mkl_gradient: j.mkl_gradient,
            gradient_max_iter: j.gradient_max_iter,
            threads: None,
        }
    }
}

impl JumpFile {
    pub fn resolve(&self) -> Result<JumpConfig, CliError> {
        Ok(JumpConfig {
            sim: SimConfig {
                n: self.n,
                d: self.d,
                m: self.m,
                sigma: self.sigma,
                kernel: self.kernel,
                seed: require_seed(self.seed)?,
            },
            lambda_grid_size: self.lambda_grid_size,
            ln_c_min: self.ln_c_min,
            ln_c_max: self.ln_c_max,
            c_grid_ratio: self.c_grid_ratio,
            mkl: self.mkl,
            mkl_d: self.mkl_d,
            mkl_eta_grid: self.mkl_eta_grid,
            mkl_gradient: self.mkl_gradient,
            gradient_max_iter: self.gradient_max_iter,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareFile {
    pub d: usize,
    pub m: usize,
    pub sigma: f64,
    pub kernel: KernelKind,
    pub seed: Option<u64>,
    pub n_list: Vec<usize>,
    pub reps: usize,
    pub methods: Vec<Method>,
    pub settings: Vec<Setting>,
    pub cv_folds: usize,
    pub lambda_grid_size: Option<usize>,
    pub mkl_d: usize,
    pub mkl_eta_grid: usize,
    pub mkl_cv_lambdas: usize,
    pub mkl_cv_max_iter: usize,
    pub threads: Option<usize>,
}

impl Default for CompareFile {
    fn default() -> Self {
        let c = CompareConfig::default();
        Self {
            d: c.sim.d,
            m: c.sim.m,
            sigma: c.sim.sigma,
            kernel: c.sim.kernel,
            seed: None,
            n_list: c.n_list,
            reps: c.reps,
            methods: c.methods,
            settings: c.settings,
            cv_folds: c.cv_folds,
            lambda_grid_size: c.lambda_grid_size,
            mkl_d: c.mkl_d,
            mkl_eta_grid: c.mkl_eta_grid,
            mkl_cv_lambdas: c.mkl_cv_lambdas,
            mkl_cv_max_iter: c.mkl_cv_max_iter,
            threads: None,
        }
    }
}

impl CompareFile {
    pub fn resolve(&self) -> Result<CompareConfig, CliError> {
        let n = self.n_list.first().copied().unwrap_or(0);
        Ok(CompareConfig {
            sim: SimConfig {
                n,
                d: self.d,
                m: self.m,
                sigma: self.sigma,
                kernel: self.kernel,
                seed: require_seed(self.seed)?,
            },
            n_list: self.n_list.clone(),
            reps: self.reps,
            methods: self.methods.clone(),
            settings: self.settings.clone(),
            cv_folds: self.cv_folds,
            lambda_grid_size: self.lambda_grid_size,
            mkl_d: self.mkl_d,
            mkl_eta_grid: self.mkl_eta_grid,
            mkl_cv_lambdas: self.mkl_cv_lambdas,
            mkl_cv_max_iter: self.mkl_cv_max_iter,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseFile {
    pub n: usize,
    pub trials: usize,
    pub x_values: Vec<f64>,
    pub thetas: Vec<f64>,
    pub seed: Option<u64>,
    pub block_size: usize,
    pub threads: Option<usize>,
}

impl Default for DiagnoseFile {
    fn default() -> Self {
        let c = ConcentrationConfig::default();
        Self {
            n: c.n,
            trials: c.trials,
            x_values: c.x_values,
            thetas: c.thetas,
            seed: None,
            block_size: c.block_size,
            threads: None,
        }
    }
}

impl DiagnoseFile {
    pub fn resolve(&self) -> Result<ConcentrationConfig, CliError> {
        Ok(ConcentrationConfig {
            n: self.n,
            trials: self.trials,
            x_values: self.x_values.clone(),
            thetas: self.thetas.clone(),
            seed: require_seed(self.seed)?,
            block_size: self.block_size,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurvesFile {
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub sigma: f64,
    pub kernel: KernelKind,
    pub seed: Option<u64>,
    pub lambda_grid_size: Option<usize>,
    pub threads: Option<usize>,
}

impl Default for CurvesFile {
    fn default() -> Self {
        let c = CurvesConfig::default();
        Self {
            n: c.sim.n,
            d: c.sim.d,
            m: c.sim.m,
            sigma: c.sim.sigma,
            kernel: c.sim.kernel,
            seed: None,
            lambda_grid_size: c.lambda_grid_size,
            threads: None,
        }
    }
}

impl CurvesFile {
    pub fn resolve(&self) -> Result<CurvesConfig, CliError> {
        Ok(CurvesConfig {
            sim: SimConfig {
                n: self.n,
                d: self.d,
                m: self.m,
                sigma: self.sigma,
                kernel: self.kernel,
                seed: require_seed(self.seed)?,
            },
            lambda_grid_size: self.lambda_grid_size,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_named() {
        let err = serde_json::from_str::<JumpFile>(r#"{"n": 100, "bogus_key": 1}"#).unwrap_err();
        assert!(err.to_string().contains("bogus_key"));
    }

    #[test]
    fn partial_configs_keep_defaults() {
        let c: CompareFile = serde_json::from_str(r#"{"reps": 3, "methods": ["minpen", "gcv"]}"#).unwrap();
        assert_eq!(c.reps, 3);
        assert_eq!(c.n_list, vec![100, 200, 500]);
        assert_eq!(c.methods, vec![Method::Minpen, Method::Gcv]);
    }

    #[test]
    fn seed_is_required() {
        assert!(CurvesFile::default().resolve().is_err());
        let c = CurvesFile { seed: Some(3), ..CurvesFile::default() };
        assert_eq!(c.resolve().unwrap().sim.seed, 3);
    }
}
