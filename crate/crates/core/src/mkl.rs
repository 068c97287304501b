//! Continuous optimization of multiple-kernel weights.
//!
//! For `G = Σ η_j K_j`, `ν = nλ` and `R = (G + νI)⁻¹` the smoother is
//! `A = G R = I − νR`, so with `∂R/∂η_j = −R K_j R`:
//!
//! * `∂ ‖(I−A)Y‖² / ∂η_j = −2ν² (RY)ᵀ R K_j (RY)`
//! * `∂ tr A / ∂η_j = ν tr(R² K_j)`
//! * `∂ tr A² / ∂η_j = 2ν tr(R² K_j) − 2ν² tr(R³ K_j)`
//!
//! Everything is evaluated in the eigenbasis of `G`.

use faer::linalg::solvers::Solve;
use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{eigendecompose, KernelMatrix};
use crate::smoothers::{check_weights, mkl_effective_kernel, SmootherStats};

/// Maximum number of step halvings in one backtracking search.
pub const MAX_HALVINGS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MklPenalty {
    /// `C (2 tr A − tr AᵀA)`
    Minimal,
    /// `2 C tr A`
    Ideal,
    /// `C tr A`
    HalfIdeal,
}

impl MklPenalty {
    /// Coefficients `(a, b)` of `C (a tr A + b tr A²)`.
    fn coefficients(self) -> (f64, f64) {
        match self {
            MklPenalty::Minimal => (2.0, -1.0),
            MklPenalty::Ideal => (2.0, 0.0),
            MklPenalty::HalfIdeal => (1.0, 0.0),
        }
    }
}

/// `crit(η) = ‖(I − A_{η,λ}) Y‖² + C · pen(A_{η,λ})` at fixed λ.
#[derive(Debug, Clone, Copy)]
pub struct MklObjective<'a> {
    pub kernels: &'a [KernelMatrix],
    pub y: &'a [f64],
    pub lambda: f64,
    pub c: f64,
    pub penalty: MklPenalty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MklEvaluation {
    pub value: f64,
    pub rss: f64,
    pub stats: SmootherStats,
    /// `∂ tr A / ∂η` (only with gradients requested).
    pub df_gradient: Option<Vec<f64>>,
    pub gradient: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MklStep {
    pub eta: Vec<f64>,
    pub value: f64,
    /// False when no halving produced a decrease and `eta` is unchanged.
    pub accepted: bool,
    pub halvings: usize,
    /// Step length that was finally used (0 when rejected).
    pub step: f64,
}

impl<'a> MklObjective<'a> {
    pub fn new(kernels: &'a [KernelMatrix], y: &'a [f64], lambda: f64, c: f64) -> Self {
        Self { kernels, y, lambda, c, penalty: MklPenalty::Minimal }
    }

    pub fn with_penalty(mut self, penalty: MklPenalty) -> Self {
        self.penalty = penalty;
        self
    }

    fn n(&self) -> usize {
        self.y.len()
    }

    /// Criterion value, and its η-gradient when `gradient` is true.
    pub fn evaluate(&self, eta: &[f64], gradient: bool) -> Result<MklEvaluation> {
        let n = self.n();
        if !(self.lambda > 0.0) {
            return Err(Error::invalid("MKL optimization needs λ > 0"));
        }
        if eta.len() != self.kernels.len() {
            return Err(Error::invalid(format!("η has {} weights for {} kernels", eta.len(), self.kernels.len())));
        }
        let nu = n as f64 * self.lambda;
        let (a, b) = self.penalty.coefficients();
        if eta.iter().all(|&e| e == 0.0) {
            // G = 0: A = 0
            let rss = self.y.iter().map(|v| v * v).sum();
            let stats = SmootherStats { df: 0.0, tr_ata: 0.0, minpen_factor: 0.0 };
            return Ok(MklEvaluation { value: rss, rss, stats, df_gradient: None, gradient: None });
        }
        let g = mkl_effective_kernel(self.kernels, eta)?;
        let eig = eigendecompose(&g)?;
        let r: Vec<f64> = eig.values().iter().map(|&mu| 1.0 / (mu + nu)).collect();
        let z = eig.coefficients(self.y);
        let mut rss = 0.0;
        let (mut df, mut tr_ata) = (0.0, 0.0);
        for (j, &mu) in eig.values().iter().enumerate() {
            let s = mu * r[j];
            let resid = nu * r[j] * z[j];
            rss += resid * resid;
            df += s;
            tr_ata += s * s;
        }
        let stats = SmootherStats { df, tr_ata, minpen_factor: 2.0 * df - tr_ata };
        let value = rss + self.c * (a * df + b * tr_ata);
        if !gradient {
            return Ok(MklEvaluation { value, rss, stats, df_gradient: None, gradient: None });
        }

        let q = eig.vectors();
        // RY and R²Y in the original basis
        let ry = eig.synthesize(&z.iter().zip(&r).map(|(zj, rj)| zj * rj).collect::<Vec<_>>());
        let r2y = eig.synthesize(&z.iter().zip(&r).map(|(zj, rj)| zj * rj * rj).collect::<Vec<_>>());
        let mut grad = Vec::with_capacity(self.kernels.len());
        let mut df_grad = Vec::with_capacity(self.kernels.len());
        for k in self.kernels {
            let km = k.as_mat();
            let kq = km * q;
            // diag(Qᵀ K_j Q)
            let d: Vec<f64> = (0..n).map(|i| (0..n).map(|a_| q[(a_, i)] * kq[(a_, i)]).sum()).collect();
            let tr_r2k: f64 = d.iter().zip(&r).map(|(di, ri)| di * ri * ri).sum();
            let tr_r3k: f64 = d.iter().zip(&r).map(|(di, ri)| di * ri * ri * ri).sum();
            let mut quad = 0.0;
            for i in 0..n {
                let row: f64 = (0..n).map(|j| km[(i, j)] * ry[j]).sum();
                quad += r2y[i] * row;
            }
            let d_rss = -2.0 * nu * nu * quad;
            let d_df = nu * tr_r2k;
            let d_ata = 2.0 * nu * tr_r2k - 2.0 * nu * nu * tr_r3k;
            df_grad.push(d_df);
            grad.push(d_rss + self.c * (a * d_df + b * d_ata));
        }
        Ok(MklEvaluation { value, rss, stats, df_gradient: Some(df_grad), gradient: Some(grad) })
    }

    /// One projected-gradient step `η ← max(0, η − t ∇crit)`, halving `t`
    /// until the criterion decreases (at most [`MAX_HALVINGS`] times).
    pub fn step(&self, eta: &[f64], step: f64) -> Result<MklStep> {
        if eta.iter().any(|&e| !(e >= 0.0)) {
            return Err(Error::invalid(format!("η must be nonnegative, got {eta:?}")));
        }
        if !(step > 0.0) {
            return Err(Error::invalid(format!("step must be positive, got {step}")));
        }
        let here = self.evaluate(eta, true)?;
        let grad = here.gradient.expect("gradient requested");
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical(format!("non-finite MKL gradient at η = {eta:?}")));
        }
        let rejected =
            |halvings| MklStep { eta: eta.to_vec(), value: here.value, accepted: false, halvings, step: 0.0 };
        let mut t = step;
        for h in 0..=MAX_HALVINGS {
            let cand: Vec<f64> = eta.iter().zip(&grad).map(|(e, g)| (e - t * g).max(0.0)).collect();
            if cand == eta {
                return Ok(rejected(h));
            }
            if cand.iter().any(|&e| e > 0.0) {
                let v = self.evaluate(&cand, false)?.value;
                if v < here.value {
                    return Ok(MklStep { eta: cand, value: v, accepted: true, halvings: h, step: t });
                }
            }
            t *= 0.5;
        }
        Ok(rejected(MAX_HALVINGS))
    }
}

/// One projected-gradient step on the minimal-penalty criterion.
pub fn mkl_gradient_step(
    kernels: &[KernelMatrix],
    eta: &[f64],
    lambda: f64,
    y: &[f64],
    c: f64,
    step: f64,
) -> Result<MklStep> {
    MklObjective::new(kernels, y, lambda, c).step(eta, step)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescentOptions {
    pub max_iter: usize,
    /// Stop once a step improves the criterion by less than this fraction.
    pub rel_tol: f64,
}

impl Default for DescentOptions {
    fn default() -> Self {
        Self { max_iter: 100, rel_tol: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MklDescent {
    pub eta: Vec<f64>,
    pub value: f64,
    pub stats: SmootherStats,
    pub iterations: usize,
    pub converged: bool,
}

/// Projected gradient descent from `eta0`. The first trial step moves η by
/// half its ℓ¹ norm; accepted steps double the next trial step.
pub fn mkl_gradient_descent(objective: &MklObjective<'_>, eta0: &[f64], opts: &DescentOptions) -> Result<MklDescent> {
    check_weights(eta0)?;
    let mut eta = eta0.to_vec();
    let first = objective.evaluate(&eta, true)?;
    let grad = first.gradient.expect("gradient requested");
    let gnorm: f64 = grad.iter().map(|g| g.abs()).sum();
    let mut value = first.value;
    let mut converged = gnorm == 0.0;
    let mut step = if gnorm > 0.0 { 0.5 * eta.iter().sum::<f64>() / gnorm } else { 1.0 };
    let mut iterations = 0;
    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let s = objective.step(&eta, step)?;
        if !s.accepted {
            converged = true;
            break;
        }
        let improvement = value - s.value;
        eta = s.eta;
        value = s.value;
        step = 2.0 * s.step;
        if improvement <= opts.rel_tol * value.abs() {
            converged = true;
        }
    }
    let stats = objective.evaluate(&eta, false)?.stats;
    Ok(MklDescent { eta, value, stats, iterations, converged })
}

/// `J(η) = n⁻¹ Yᵀ(Σ η_j K_j + nλI)⁻¹ Y + λ Σ η_j`, the kernel-weight
/// objective of group-lasso MKL at fixed λ (convex in η).
pub fn group_lasso_objective(kernels: &[KernelMatrix], y: &[f64], lambda: f64, eta: &[f64]) -> Result<(f64, Vec<f64>)> {
    let n = y.len();
    let nu = n as f64 * lambda;
    let g = mkl_effective_kernel(kernels, eta)?;
    let reg = Mat::from_fn(n, n, |i, j| g.get(i, j) + if i == j { nu } else { 0.0 });
    let rhs = Mat::from_fn(n, 1, |i, _| y[i]);
    let ry = reg.partial_piv_lu().solve(&rhs);
    let ry: Vec<f64> = (0..n).map(|i| ry[(i, 0)]).collect();
    if ry.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("singular system in the MKL objective at η = {eta:?}")));
    }
    let value = y.iter().zip(&ry).map(|(a, b)| a * b).sum::<f64>() / n as f64 + lambda * eta.iter().sum::<f64>();
    let grad = kernels
        .iter()
        .map(|k| {
            let km = k.as_mat();
            let quad: f64 = (0..n).map(|i| ry[i] * (0..n).map(|j| km[(i, j)] * ry[j]).sum::<f64>()).sum();
            lambda - quad / n as f64
        })
        .collect();
    Ok((value, grad))
}

/// Minimizes [`group_lasso_objective`] over `η ≥ 0` by projected gradient
/// descent with backtracking, starting from `η = (1, …, 1)`.
pub fn group_lasso_weights(
    kernels: &[KernelMatrix],
    y: &[f64],
    lambda: f64,
    opts: &DescentOptions,
) -> Result<Vec<f64>> {
    if !(lambda > 0.0) {
        return Err(Error::invalid("group-lasso MKL needs λ > 0"));
    }
    let mut eta = vec![1.0; kernels.len()];
    let (mut value, mut grad) = group_lasso_objective(kernels, y, lambda, &eta)?;
    let mut step = 1.0 / grad.iter().map(|g| g.abs()).fold(f64::MIN_POSITIVE, f64::max);
    for _ in 0..opts.max_iter {
        let mut accepted = None;
        let mut t = step;
        for _ in 0..=MAX_HALVINGS {
            let cand: Vec<f64> = eta.iter().zip(&grad).map(|(e, g)| (e - t * g).max(0.0)).collect();
            if cand == eta {
                break;
            }
            let (v, g) = group_lasso_objective(kernels, y, lambda, &cand)?;
            if v < value {
                accepted = Some((cand, v, g));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, v, g)) = accepted else { break };
        let improvement = value - v;
        eta = cand;
        value = v;
        grad = g;
        step = 2.0 * t;
        if improvement <= opts.rel_tol * value.abs() {
            break;
        }
    }
    Ok(eta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{build_kernel_matrix, KernelSpec, PointSet};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    fn two_kernels(n: usize, seed: u64) -> (Vec<KernelMatrix>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p1 = PointSet::new(random_vec(n * 2, &mut rng), n, 2).unwrap();
        let p2 = PointSet::new(random_vec(n * 2, &mut rng), n, 2).unwrap();
        let k1 = build_kernel_matrix(&KernelSpec::exponential(), &p1).unwrap();
        let k2 = build_kernel_matrix(&KernelSpec::exponential(), &p2).unwrap();
        (vec![k1, k2], random_vec(n, &mut rng))
    }

    fn diag(values: &[f64]) -> KernelMatrix {
        let n = values.len();
        KernelMatrix::from_matrix(Mat::from_fn(n, n, |i, j| if i == j { values[i] } else { 0.0 })).unwrap()
    }

    #[test]
    fn criterion_gradient_matches_central_differences() {
        for seed in 0..4 {
            let (kernels, y) = two_kernels(15, seed);
            for penalty in [MklPenalty::Minimal, MklPenalty::Ideal, MklPenalty::HalfIdeal] {
                let obj = MklObjective::new(&kernels, &y, 0.02, 0.7).with_penalty(penalty);
                let eta = [0.8, 1.3];
                let g = obj.evaluate(&eta, true).unwrap().gradient.unwrap();
                for j in 0..2 {
                    let h = 1e-5;
                    let mut up = eta;
                    let mut dn = eta;
                    up[j] += h;
                    dn[j] -= h;
                    let fd =
                        (obj.evaluate(&up, false).unwrap().value - obj.evaluate(&dn, false).unwrap().value) / (2.0 * h);
                    assert!(
                        (g[j] - fd).abs() <= 1e-5 * fd.abs().max(1e-3),
                        "seed {seed} {penalty:?} j {j}: {} vs {fd}",
                        g[j]
                    );
                }
            }
        }
    }

    #[test]
    fn step_never_increases_the_criterion() {
        for seed in 10..14 {
            let (kernels, y) = two_kernels(12, seed);
            let obj = MklObjective::new(&kernels, &y, 0.05, 0.5);
            let mut eta = vec![1.0, 1.0];
            let mut value = obj.evaluate(&eta, false).unwrap().value;
            for _ in 0..5 {
                let s = obj.step(&eta, 10.0).unwrap();
                assert!(s.value <= value);
                assert!(s.eta.iter().all(|&e| e >= 0.0));
                eta = s.eta;
                value = s.value;
            }
        }
    }

    #[test]
    fn separable_problem_stationary_point() {
        // K1 = e1 e1ᵀ, K2 = e2 e2ᵀ: with the ideal penalty each coordinate
        // solves y_i² w_i² + 2C(1 − w_i), w_i = ν/(η_i + ν), so w_i = C / y_i².
        let kernels = vec![diag(&[1.0, 0.0]), diag(&[0.0, 1.0])];
        let y = [3.0, 2.0];
        let (lambda, c) = (0.5, 1.0);
        let nu = 2.0 * lambda;
        let opt: Vec<f64> = y.iter().map(|yi: &f64| nu * (yi * yi / c - 1.0)).collect();
        let obj = MklObjective::new(&kernels, &y, lambda, c).with_penalty(MklPenalty::Ideal);
        let s = obj.step(&opt, 1.0).unwrap();
        for (a, b) in s.eta.iter().zip(&opt) {
            assert!((a - b).abs() < 1e-8);
        }
        // y_2² < C: the optimum sits on the boundary η_2 = 0
        let y = [3.0, 0.5];
        let obj = MklObjective::new(&kernels, &y, lambda, c).with_penalty(MklPenalty::Ideal);
        let boundary = [nu * (9.0 / c - 1.0), 0.0];
        let s = obj.step(&boundary, 1.0).unwrap();
        assert!((s.eta[0] - boundary[0]).abs() < 1e-8);
        assert_eq!(s.eta[1], 0.0);
    }

    #[test]
    fn minimal_penalty_wrapper_and_errors() {
        let (kernels, y) = two_kernels(8, 3);
        let s = mkl_gradient_step(&kernels, &[1.0, 1.0], 0.1, &y, 0.3, 1.0).unwrap();
        let direct = MklObjective::new(&kernels, &y, 0.1, 0.3).step(&[1.0, 1.0], 1.0).unwrap();
        assert_eq!(s, direct);
        assert!(mkl_gradient_step(&kernels, &[-1.0, 1.0], 0.1, &y, 0.3, 1.0).is_err());
        assert!(mkl_gradient_step(&kernels, &[1.0, 1.0], 0.0, &y, 0.3, 1.0).is_err());
    }

    #[test]
    fn zero_weights_mean_zero_smoother() {
        let (kernels, y) = two_kernels(6, 4);
        let e = MklObjective::new(&kernels, &y, 0.1, 1.0).evaluate(&[0.0, 0.0], false).unwrap();
        let norm: f64 = y.iter().map(|v| v * v).sum();
        assert_eq!(e.value, norm);
        assert_eq!(e.stats.df, 0.0);
    }

    #[test]
    fn group_lasso_gradient_and_descent() {
        let (kernels, y) = two_kernels(12, 7);
        let lambda = 0.05;
        let eta = [0.7, 1.4];
        let (_, g) = group_lasso_objective(&kernels, &y, lambda, &eta).unwrap();
        for j in 0..2 {
            let h = 1e-6;
            let mut up = eta;
            let mut dn = eta;
            up[j] += h;
            dn[j] -= h;
            let fd = (group_lasso_objective(&kernels, &y, lambda, &up).unwrap().0
                - group_lasso_objective(&kernels, &y, lambda, &dn).unwrap().0)
                / (2.0 * h);
            assert!((g[j] - fd).abs() <= 1e-6 * fd.abs().max(1e-3));
        }
        let opts = DescentOptions { max_iter: 200, rel_tol: 1e-12 };
        let w = group_lasso_weights(&kernels, &y, lambda, &opts).unwrap();
        let (v, g) = group_lasso_objective(&kernels, &y, lambda, &w).unwrap();
        assert!(v <= group_lasso_objective(&kernels, &y, lambda, &[1.0, 1.0]).unwrap().0);
        // approximate KKT: zero gradient on the support, nonnegative off it
        for j in 0..2 {
            if w[j] > 1e-8 {
                assert!(g[j].abs() < 1e-3, "{g:?} at {w:?}");
            } else {
                assert!(g[j] > -1e-3);
            }
        }
    }
}
