use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::io::{Cell, Table};
use crate::kernels::{eigendecompose, KernelMatrix};

/// Smallest trial count accepted by [`concentration_diagnostics`].
pub const MIN_TRIALS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationConfig {
    /// Dimension of the Gaussian vector.
    pub n: usize,
    pub trials: usize,
    pub x_values: Vec<f64>,
    pub thetas: Vec<f64>,
    pub seed: u64,
    /// Trials per independently seeded block.
    pub block_size: usize,
}

impl Default for ConcentrationConfig {
    fn default() -> Self {
        Self {
            n: 50,
            trials: 100_000,
            x_values: vec![1.0, 2.0, 4.0],
            thetas: vec![0.1, 0.5, 1.0, 2.0],
            seed: 0,
            block_size: 1000,
        }
    }
}

/// `P(|N(0,1)| > √(2x)) = erfc(√x)`.
pub fn gaussian_two_sided_tail(x: f64) -> f64 {
    erfc(x.sqrt())
}

/// Fixed test objects: a random vector `α`, a random matrix `M` with
/// `N(0, 1/n)` entries, and the quantities the bounds need.
struct Objects {
    n: usize,
    alpha: Vec<f64>,
    alpha_norm: f64,
    /// Row-major.
    m: Vec<f64>,
    m_frob: f64,
    m_op_sq: f64,
}

impl Objects {
    fn draw(n: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let alpha: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let scale = (n as f64).sqrt().recip();
        let m: Vec<f64> = (0..n * n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
        let mm = Mat::from_fn(n, n, |i, j| m[i * n + j]);
        let gram = KernelMatrix::from_matrix(mm.transpose() * &mm)?;
        let m_op_sq = eigendecompose(&gram)?.values()[0];
        Ok(Self {
            n,
            alpha_norm: alpha.iter().map(|a| a * a).sum::<f64>().sqrt(),
            alpha,
            m_frob: m.iter().map(|v| v * v).sum(),
            m,
            m_op_sq,
        })
    }
}

/// Violation counts, indexed as in [`Counts::new`].
#[derive(Debug, Clone, PartialEq)]
struct Counts {
    /// `[x]` for the random α and for α = 0.
    linear: Vec<[usize; 2]>,
    /// `[x][θ or "all"]` for the random M and for M = I.
    quadratic: Vec<Vec<[usize; 2]>>,
}

impl Counts {
    fn new(nx: usize, ntheta: usize) -> Self {
        Self { linear: vec![[0; 2]; nx], quadratic: vec![vec![[0; 2]; ntheta + 1]; nx] }
    }

    fn add(mut self, other: &Counts) -> Self {
        for (a, b) in self.linear.iter_mut().zip(&other.linear) {
            a[0] += b[0];
            a[1] += b[1];
        }
        for (ra, rb) in self.quadratic.iter_mut().zip(&other.quadratic) {
            for (a, b) in ra.iter_mut().zip(rb) {
                a[0] += b[0];
                a[1] += b[1];
            }
        }
        self
    }
}

fn run_block(obj: &Objects, config: &ConcentrationConfig, block: usize, trials: usize) -> Counts {
    let n = obj.n;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(block as u64 + 1);
    let mut counts = Counts::new(config.x_values.len(), config.thetas.len());
    let mut xi = vec![0.0; n];
    let traces = [obj.m_frob, n as f64];
    let op_sq = [obj.m_op_sq, 1.0];
    for _ in 0..trials {
        for v in xi.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let lin = obj.alpha.iter().zip(&xi).map(|(a, b)| a * b).sum::<f64>().abs();
        let mxi_sq: f64 = (0..n)
            .map(|i| {
                let row = &obj.m[i * n..(i + 1) * n];
                let v: f64 = row.iter().zip(&xi).map(|(a, b)| a * b).sum();
                v * v
            })
            .sum();
        let xi_sq: f64 = xi.iter().map(|v| v * v).sum();
        let z = [(mxi_sq - traces[0]).abs(), (xi_sq - traces[1]).abs()];
        for (ix, &x) in config.x_values.iter().enumerate() {
            let r = (2.0 * x).sqrt();
            if lin > r * obj.alpha_norm {
                counts.linear[ix][0] += 1;
            }
            // α = 0: |0| > 0 never holds
            for case in 0..2 {
                let mut any = false;
                for (it, &theta) in config.thetas.iter().enumerate() {
                    let bound = theta * traces[case] + 2.0 * (1.0 + 1.0 / theta) * op_sq[case] * x;
                    if z[case] > bound {
                        counts.quadratic[ix][it][case] += 1;
                        any = true;
                    }
                }
                if any {
                    counts.quadratic[ix][config.thetas.len()][case] += 1;
                }
            }
        }
    }
    counts
}

/// One row of the violation table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViolationRow {
    /// `linear` or `quadratic`.
    pub inequality: &'static str,
    /// `random`, `zero` (α = 0) or `identity` (M = I).
    pub case: &'static str,
    /// `None` for the linear bound and for the simultaneous-θ row.
    pub theta: Option<f64>,
    pub x: f64,
    pub trials: usize,
    pub violations: usize,
    pub rate: f64,
    /// `2 e^{−x}`
    pub bound: f64,
    /// `3 √(2 e^{−x} / trials)`
    pub mc_allowance: f64,
    /// Exact `P(|⟨α, ξ⟩| > √(2x) ‖α‖)` for the linear bound.
    pub gaussian_tail: Option<f64>,
}

impl ViolationRow {
    pub fn within_bound(&self) -> bool {
        self.rate <= self.bound + self.mc_allowance
    }
}

/// Monte-Carlo violation frequencies of the linear and quadratic Gaussian
/// concentration bounds. Trials run in blocks with their own stream of the
/// seeded generator, so counts do not depend on the thread count.
pub fn concentration_diagnostics(config: &ConcentrationConfig) -> Result<Vec<ViolationRow>> {
    if config.trials < MIN_TRIALS {
        return Err(Error::invalid(format!("need at least {MIN_TRIALS} trials, got {}", config.trials)));
    }
    if config.n == 0 || config.block_size == 0 {
        return Err(Error::invalid("n and block_size must be positive"));
    }
    if config.x_values.iter().any(|&x| !(x >= 0.0)) || config.thetas.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::invalid("x values must be >= 0 and θ values > 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let obj = Objects::draw(config.n, &mut rng)?;
    let blocks = config.trials.div_ceil(config.block_size);
    let counts = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let len = config.block_size.min(config.trials - b * config.block_size);
            run_block(&obj, config, b, len)
        })
        .collect::<Vec<_>>()
        .iter()
        .fold(Counts::new(config.x_values.len(), config.thetas.len()), Counts::add);

    let t = config.trials;
    let row = |inequality, case, theta, x: f64, violations: usize, tail| {
        let bound = 2.0 * (-x).exp();
        ViolationRow {
            inequality,
            case,
            theta,
            x,
            trials: t,
            violations,
            rate: violations as f64 / t as f64,
            bound,
            mc_allowance: 3.0 * (bound / t as f64).sqrt(),
            gaussian_tail: tail,
        }
    };
    let mut rows = Vec::new();
    for (ix, &x) in config.x_values.iter().enumerate() {
        let tail = Some(gaussian_two_sided_tail(x));
        rows.push(row("linear", "random", None, x, counts.linear[ix][0], tail));
        rows.push(row("linear", "zero", None, x, counts.linear[ix][1], Some(0.0)));
    }
    for (case_ix, case) in ["random", "identity"].into_iter().enumerate() {
        for (ix, &x) in config.x_values.iter().enumerate() {
            for (it, &theta) in config.thetas.iter().enumerate() {
                rows.push(row("quadratic", case, Some(theta), x, counts.quadratic[ix][it][case_ix], None));
            }
            rows.push(row("quadratic", case, None, x, counts.quadratic[ix][config.thetas.len()][case_ix], None));
        }
    }
    Ok(rows)
}

pub fn violation_table(rows: &[ViolationRow]) -> Table {
    let mut t = Table::new([
        "inequality",
        "case",
        "theta",
        "x",
        "trials",
        "violations",
        "rate",
        "bound",
        "mc_allowance",
        "gaussian_tail",
        "within_bound",
    ]);
    for r in rows {
        let theta = match (r.inequality, r.theta) {
            (_, Some(th)) => Cell::Float(th),
            ("quadratic", None) => Cell::from("all"),
            _ => Cell::Empty,
        };
        t.push(vec![
            r.inequality.into(),
            r.case.into(),
            theta,
            r.x.into(),
            r.trials.into(),
            r.violations.into(),
            r.rate.into(),
            r.bound.into(),
            r.mc_allowance.into(),
            r.gaussian_tail.into(),
            Cell::from(if r.within_bound() { "true" } else { "false" }),
        ]);
    }
    t
}
