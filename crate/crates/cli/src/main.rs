//! `minpen`: calibrate a kernel ridge smoother on CSV data, or run the
//! simulation experiments.
//!
//! Exit codes: 0 success, 2 input error, 3 no usable jump, 4 numerical failure.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use minpen::calibration::{calibrate, minpen_path, CGrid};
use minpen::io::{fitted_table, path_table, read_dataset_path, read_kernel_path, Table};
use minpen::kernels::{build_kernel_matrix, KernelSpec};
use minpen::simulation::{
    concentration_diagnostics, curves_table, run_comparison_experiment, run_curves_experiment, run_jump_experiment,
    violation_table, Method,
};
use minpen::smoothers::{LambdaGrid, SmootherFamily};
use serde::Serialize;
use serde_json::{json, Value};

use config::{CalibrateFile, CompareFile, CurvesFile, DiagnoseFile, JumpFile};

#[derive(Debug)]
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }
}

impl From<minpen::Error> for CliError {
    fn from(e: minpen::Error) -> Self {
        use minpen::Error as E;
        let code = match &e {
            E::InvalidInput(_) | E::Csv { .. } | E::Io(_) | E::Unsupported(_) => 2,
            E::NoJump(_) | E::Window(_) => 3,
            E::Numerical(_) => 4,
        };
        Self { code, message: e.to_string() }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(name = "minpen", version, about = "Minimal-penalty calibration of kernel ridge smoothers")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON config with flat keys; unset keys keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Base seed; required by the simulation commands unless set in the config
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Estimate σ² from the minimal-penalty jump and select λ on CSV data.
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// CSV with a header row, feature columns and the response last.
        #[arg(long)]
        data: PathBuf,
        /// Precomputed n×n kernel CSV (overrides the config's kernel).
        #[arg(long)]
        kernel_file: Option<PathBuf>,
    },
    /// Selected df against ln(C/σ²) under the minimal and half-ideal penalties.
    Jump {
        #[command(flatten)]
        common: Common,
    },
    /// Risk ratios of selection methods over simulated replications.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated subset of minpen,gcv,cv10,mallows,mkl-cv,minpen-sum-kernel.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
    },
    /// Monte-Carlo violation rates of the Gaussian concentration bounds.
    Diagnose {
        #[command(flatten)]
        common: Common,
        /// Monte-Carlo trials (at least 10000)
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Bias, variance and penalty curves over a ridge path.
    Curves {
        #[command(flatten)]
        common: Common,
    },
}

fn write_table(dir: &Path, name: &str, table: &Table) -> CliResult<String> {
    table.write_path(dir.join(name))?;
    Ok(name.to_string())
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> CliResult<String> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError { code: 4, message: e.to_string() })?;
    fs::write(dir.join(name), text + "\n").map_err(|e| CliError::input(format!("cannot write {name}: {e}")))?;
    Ok(name.to_string())
}

fn write_manifest(
    dir: &Path,
    command: &str,
    config: &Value,
    threads: usize,
    outputs: &[String],
    notes: &[&str],
) -> CliResult<()> {
    let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let manifest = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "timestamp_unix": timestamp,
        "threads": threads,
        "config": config,
        "outputs": outputs,
        "notes": notes,
    });
    write_json(dir, "manifest.json", &manifest)?;
    Ok(())
}

fn prepare_out(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::input(format!("cannot create {}: {e}", dir.display())))
}

fn thread_pool(threads: Option<usize>) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::input(format!("cannot start thread pool: {e}")))
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn cmd_calibrate(common: &Common, data: &Path, kernel_file: Option<PathBuf>) -> CliResult<()> {
    let mut cfg: CalibrateFile = config::load(common.config.as_deref())?;
    cfg.seed = common.seed.or(cfg.seed);
    cfg.threads = common.threads.or(cfg.threads);
    if kernel_file.is_some() {
        cfg.kernel_file = kernel_file;
    }
    let pool = thread_pool(cfg.threads)?;
    let ds = read_dataset_path(data)?;
    let n = ds.y.len();
    let kernel = match &cfg.kernel_file {
        Some(p) => {
            let k = read_kernel_path(p)?;
            if k.n() != n {
                return Err(CliError::input(format!("kernel is {}×{} but the data has {n} rows", k.n(), k.n())));
            }
            k
        }
        None => build_kernel_matrix(&KernelSpec::Function(cfg.kernel), &ds.points)?,
    };
    let grid = cfg.lambda_grid_size.map_or(LambdaGrid::Default, LambdaGrid::Size);
    let cal_config = cfg.calibration_config(n)?;
    prepare_out(&common.out)?;
    let out = &common.out;
    let outcome = pool.install(|| -> CliResult<_> {
        let family = SmootherFamily::ridge_path(kernel, &grid)?;
        let result = calibrate(&family, &ds.y, &cal_config);
        Ok((family, result))
    })?;
    let (family, result) = outcome;
    let config_value = to_value(&cfg);
    match result {
        Ok(res) => {
            for w in &res.warnings {
                eprintln!("warning: {w}");
            }
            let fitted = family.fit(res.selected_lambda, &ds.y)?;
            let outputs = vec![
                write_json(out, "calibration.json", &res)?,
                write_table(out, "path.csv", &path_table(&res.path, cfg.sigma2))?,
                write_table(out, "fitted.csv", &fitted_table(&ds.y, &fitted))?,
            ];
            write_manifest(out, "calibrate", &config_value, pool.current_num_threads(), &outputs, &[])?;
            println!(
                "σ̂² = {:.6e} ({:?}), selected member {} with df {:.3}",
                res.sigma2_hat, res.rule_used, res.selected_lambda, res.df_selected
            );
            Ok(())
        }
        Err(e @ (minpen::Error::NoJump(_) | minpen::Error::Window(_))) => {
            let grid = match &cal_config.grid {
                Some(g) => g.clone(),
                None => CGrid::default_for(&ds.y)?,
            };
            let rss = family.residual_sums(&ds.y)?;
            let path = pool.install(|| minpen_path(&family, &rss, &grid))?;
            let outputs = vec![write_table(out, "path.csv", &path_table(&path, cfg.sigma2))?];
            write_manifest(
                out,
                "calibrate",
                &config_value,
                pool.current_num_threads(),
                &outputs,
                &["no usable jump; only the path was written"],
            )?;
            Err(e.into())
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_jump(common: &Common) -> CliResult<()> {
    let mut file: JumpFile = config::load(common.config.as_deref())?;
    file.seed = common.seed.or(file.seed);
    file.threads = common.threads.or(file.threads);
    let cfg = file.resolve()?;
    let pool = thread_pool(file.threads)?;
    prepare_out(&common.out)?;
    let exp = pool.install(|| run_jump_experiment(&cfg))?;
    let outputs = vec![
        write_table(&common.out, "jump_curves.csv", &exp.curves)?,
        write_table(&common.out, "jump_summary.csv", &exp.summary_table())?,
    ];
    write_manifest(
        &common.out,
        "jump",
        &to_value(&file),
        pool.current_num_threads(),
        &outputs,
        &["df of the selected member against ln(C/σ²); minimal penalty C(2 tr A − tr AᵀA), half-ideal penalty C tr A"],
    )?;
    for s in &exp.summaries {
        println!(
            "{}: largest minimal-penalty drop {:.1} at ln(C/σ²) = {:.3}; half-ideal drop {:.1}",
            s.variant,
            s.minimal.map_or(f64::NAN, |j| j.size),
            s.ln_location().unwrap_or(f64::NAN),
            s.half_ideal.map_or(f64::NAN, |j| j.size)
        );
    }
    Ok(())
}

fn cmd_compare(common: &Common, methods: Option<Vec<String>>) -> CliResult<()> {
    let mut file: CompareFile = config::load(common.config.as_deref())?;
    file.seed = common.seed.or(file.seed);
    file.threads = common.threads.or(file.threads);
    if let Some(list) = methods {
        file.methods = list.iter().map(|s| s.parse::<Method>()).collect::<Result<_, _>>()?;
    }
    let cfg = file.resolve()?;
    let pool = thread_pool(file.threads)?;
    prepare_out(&common.out)?;
    let exp = pool.install(|| run_comparison_experiment(&cfg))?;
    let outputs = vec![
        write_table(&common.out, "compare_summary.csv", &exp.summary_table())?,
        write_table(&common.out, "compare_records.csv", &exp.records_table())?,
    ];
    write_manifest(&common.out, "compare", &to_value(&file), pool.current_num_threads(), &outputs, &[
        "ratio = risk / oracle risk in the single-kernel setting and risk / risk of C_L with the true σ² in the two-kernel setting",
        "failed replications are excluded from the means and counted in the failures column",
    ])?;
    for s in &exp.summaries {
        println!(
            "{} n={} {}: mean ratio {:.4} ± {:.4}, median {:.4}, failures {}",
            s.setting.name(),
            s.n,
            s.method,
            s.mean_ratio,
            s.se_ratio,
            s.median_ratio,
            s.failures
        );
    }
    Ok(())
}

fn cmd_diagnose(common: &Common, trials: Option<usize>) -> CliResult<()> {
    let mut file: DiagnoseFile = config::load(common.config.as_deref())?;
    file.seed = common.seed.or(file.seed);
    file.threads = common.threads.or(file.threads);
    if let Some(t) = trials {
        file.trials = t;
    }
    let cfg = file.resolve()?;
    let pool = thread_pool(file.threads)?;
    prepare_out(&common.out)?;
    let rows = pool.install(|| concentration_diagnostics(&cfg))?;
    let outputs = vec![write_table(&common.out, "concentration.csv", &violation_table(&rows))?];
    write_manifest(&common.out, "diagnose", &to_value(&file), pool.current_num_threads(), &outputs, &[
        "violation rates of |<α, ξ>| <= sqrt(2x)|α| and |‖Mξ‖² − tr MᵀM| <= θ tr MᵀM + 2(1 + 1/θ)‖M‖²x against 2e^{-x}",
    ])?;
    let above = rows.iter().filter(|r| !r.within_bound()).count();
    println!("{} rows, {above} above bound + 3 Monte-Carlo standard errors", rows.len());
    Ok(())
}

fn cmd_curves(common: &Common) -> CliResult<()> {
    let mut file: CurvesFile = config::load(common.config.as_deref())?;
    file.seed = common.seed.or(file.seed);
    file.threads = common.threads.or(file.threads);
    let cfg = file.resolve()?;
    let pool = thread_pool(file.threads)?;
    prepare_out(&common.out)?;
    let points = pool.install(|| run_curves_experiment(&cfg))?;
    let outputs = vec![write_table(&common.out, "bias_variance.csv", &curves_table(&points))?];
    write_manifest(
        &common.out,
        "curves",
        &to_value(&file),
        pool.current_num_threads(),
        &outputs,
        &["all columns are divided by n"],
    )?;
    println!("{} members written", points.len());
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Cmd::Calibrate { common, data, kernel_file } => cmd_calibrate(&common, &data, kernel_file),
        Cmd::Jump { common } => cmd_jump(&common),
        Cmd::Compare { common, methods } => cmd_compare(&common, methods),
        Cmd::Diagnose { common, trials } => cmd_diagnose(&common, trials),
        Cmd::Curves { common } => cmd_curves(&common),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
