//! Penalized criteria over a smoother family and the GCV / k-fold CV baselines.
//!
//! All criteria are on the unnormalized sum-of-squares scale:
//! `crit(λ) = ‖F̂_λ − Y‖² + pen(λ)`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::eigendecompose_mat;
use crate::smoothers::{ridge_shrinkage, MemberParam, SmootherFamily, SmootherStats};

/// Relative tolerance under which two criterion totals count as tied.
pub const TIE_RTOL: f64 = 1e-12;

/// Members with `df/n` above `1 - GCV_EXCLUSION` are excluded from GCV.
pub const GCV_EXCLUSION: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriterionValue {
    pub lambda_id: usize,
    pub empirical_risk_ss: f64,
    pub penalty: f64,
    pub total: f64,
}

/// `Σ (F̂_i − Y_i)²`.
pub fn empirical_risk_ss(fitted: &[f64], y: &[f64]) -> Result<f64> {
    if fitted.len() != y.len() {
        return Err(Error::invalid(format!("length mismatch: {} vs {}", fitted.len(), y.len())));
    }
    Ok(fitted.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// `C (2 tr A − tr AᵀA)`.
pub fn minimal_penalty(stats: &SmootherStats, c: f64) -> f64 {
    c * stats.minpen_factor
}

/// `2 C tr A` (Mallows' C_L with `C` in place of σ²).
pub fn ideal_penalty(stats: &SmootherStats, c: f64) -> f64 {
    2.0 * c * stats.df
}

/// `(rss/n) / (1 − df/n)²`, or `None` when the member is too close to the
/// identity (`df/n > 1 − 1e-6`) and is excluded from the argmin.
pub fn gcv_score(stats: &SmootherStats, rss: f64, n: usize) -> Option<f64> {
    let n = n as f64;
    let ratio = stats.df / n;
    if ratio > 1.0 - GCV_EXCLUSION {
        return None;
    }
    Some((rss / n) / ((1.0 - ratio) * (1.0 - ratio)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "rule", content = "c", rename_all = "kebab-case")]
pub enum PenaltyRule {
    /// Plain empirical risk.
    None,
    /// `C (2 tr A − tr AᵀA)`.
    Minimal(f64),
    /// `2 C tr A`.
    Ideal(f64),
    /// `C tr A`, half the ideal penalty.
    HalfIdeal(f64),
    Gcv,
}

impl PenaltyRule {
    /// Criterion value of a member given its residual sum of squares.
    pub fn evaluate(&self, id: usize, stats: &SmootherStats, rss: f64, n: usize) -> CriterionValue {
        let (penalty, total) = match *self {
            PenaltyRule::None => (0.0, rss),
            PenaltyRule::Minimal(c) => {
                let p = minimal_penalty(stats, c);
                (p, rss + p)
            }
            PenaltyRule::Ideal(c) => {
                let p = ideal_penalty(stats, c);
                (p, rss + p)
            }
            PenaltyRule::HalfIdeal(c) => {
                let p = c * stats.df;
                (p, rss + p)
            }
            PenaltyRule::Gcv => match gcv_score(stats, rss, n) {
                // n · GCV keeps the sum-of-squares scale
                Some(g) => {
                    let total = n as f64 * g;
                    (total - rss, total)
                }
                None => (f64::INFINITY, f64::INFINITY),
            },
        };
        CriterionValue { lambda_id: id, empirical_risk_ss: rss, penalty, total }
    }
}

/// Criterion values of every member, in family order.
pub fn criterion_values(family: &SmootherFamily, rss: &[f64], rule: PenaltyRule) -> Vec<CriterionValue> {
    family.members().iter().enumerate().map(|(id, m)| rule.evaluate(id, &m.stats, rss[id], family.n())).collect()
}

/// Index minimizing `totals`; near-ties (relative [`TIE_RTOL`]) go to the
/// member with the smallest df. Non-finite totals never win.
pub fn argmin_smallest_df(family: &SmootherFamily, totals: &[f64]) -> Result<usize> {
    if totals.is_empty() {
        return Err(Error::invalid("empty index set"));
    }
    let mut best: Option<usize> = None;
    for (id, &t) in totals.iter().enumerate() {
        if !t.is_finite() {
            continue;
        }
        match best {
            None => best = Some(id),
            Some(b) => {
                let bt = totals[b];
                let tol = TIE_RTOL * bt.abs().max(t.abs());
                if t < bt - tol || (t <= bt + tol && family.stats(id).df < family.stats(b).df) {
                    best = Some(id);
                }
            }
        }
    }
    best.ok_or_else(|| Error::Numerical("no member has a finite criterion value".into()))
}

/// `argmin_λ ‖F̂_λ − Y‖² + pen(λ)` given the residual sums of every member.
pub fn argmin_over_family(family: &SmootherFamily, rss: &[f64], rule: PenaltyRule) -> Result<usize> {
    if family.is_empty() || rss.len() != family.len() {
        return Err(Error::invalid(format!("{} residual sums for {} members", rss.len(), family.len())));
    }
    let totals: Vec<f64> = criterion_values(family, rss, rule).iter().map(|v| v.total).collect();
    argmin_smallest_df(family, &totals)
}

/// Seeded uniform random partition of `0..n` into `k` near-equal folds
/// (the first `n mod k` folds get one extra element).
pub fn kfold_partition(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::invalid(format!("k-fold CV needs k >= 2, got {k}")));
    }
    if n < k {
        return Err(Error::invalid(format!("cannot split {n} observations into {k} folds")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        let mut fold = perm[start..start + len].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += len;
    }
    Ok(folds)
}

/// Mean held-out squared error per observation for every member, refitting
/// each kernel ridge smoother on the training rows of every fold.
pub fn kfold_cv_scores(family: &SmootherFamily, y: &[f64], k: usize, seed: u64) -> Result<Vec<f64>> {
    let n = family.n();
    if y.len() != n {
        return Err(Error::invalid(format!("expected {n} responses, got {}", y.len())));
    }
    for b in 0..family.block_count() {
        if family.kernel(b).is_none() {
            return Err(Error::Unsupported("k-fold CV needs kernel-based members to refit".into()));
        }
    }
    let folds = kfold_partition(n, k, seed)?;
    let per_fold: Vec<Vec<f64>> = folds.par_iter().map(|test| fold_errors(family, y, test)).collect::<Result<_>>()?;
    let mut scores = vec![0.0; family.len()];
    for errs in &per_fold {
        for (s, e) in scores.iter_mut().zip(errs) {
            *s += e;
        }
    }
    for s in &mut scores {
        *s /= k as f64;
    }
    Ok(scores)
}

/// Score of a single member; see [`kfold_cv_scores`].
pub fn kfold_cv_score(family: &SmootherFamily, id: usize, y: &[f64], k: usize, seed: u64) -> Result<f64> {
    if id >= family.len() {
        return Err(Error::invalid(format!("member {id} out of range")));
    }
    Ok(kfold_cv_scores(family, y, k, seed)?[id])
}

fn fold_errors(family: &SmootherFamily, y: &[f64], test: &[usize]) -> Result<Vec<f64>> {
    let n = family.n();
    let mut in_test = vec![false; n];
    for &i in test {
        in_test[i] = true;
    }
    let train: Vec<usize> = (0..n).filter(|&i| !in_test[i]).collect();
    if train.is_empty() {
        return Err(Error::invalid("a fold has no training rows"));
    }
    let n_tr = train.len() as f64;
    let y_tr: Vec<f64> = train.iter().map(|&i| y[i]).collect();
    let mut errs = vec![0.0; family.len()];
    for b in 0..family.block_count() {
        let kernel = family.kernel(b).expect("checked above");
        let eig = eigendecompose_mat(&kernel.submatrix(&train, &train))?;
        let q = eig.vectors();
        let c = eig.coefficients(&y_tr);
        // rows: test points, cols: eigen-directions of the training kernel
        let w = kernel.submatrix(test, &train) * q;
        for (id, m) in family.members().iter().enumerate().filter(|(_, m)| m.block == b) {
            let lambda = match m.param {
                MemberParam::Ridge { lambda } | MemberParam::Mkl { lambda, .. } => lambda,
                MemberParam::Projection { .. } => unreachable!(),
            };
            let shrink = n_tr * lambda;
            let alpha: Vec<f64> = eig
                .values()
                .iter()
                .zip(&c)
                .map(|(&mu, &cj)| if mu <= 0.0 { 0.0 } else { ridge_shrinkage(mu, shrink) / mu * cj })
                .collect();
            let mut sse = 0.0;
            for (r, &i) in test.iter().enumerate() {
                let pred: f64 = (0..alpha.len()).map(|j| w[(r, j)] * alpha[j]).sum();
                sse += (pred - y[i]).powi(2);
            }
            errs[id] = sse / test.len() as f64;
        }
    }
    Ok(errs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{build_kernel_matrix, KernelMatrix, KernelSpec, PointSet};
    use crate::smoothers::LambdaGrid;
    use faer::Mat;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    fn kernel(n: usize, d: usize, seed: u64) -> KernelMatrix {
        let pts = PointSet::new(random_vec(n * d, seed), n, d).unwrap();
        build_kernel_matrix(&KernelSpec::exponential(), &pts).unwrap()
    }

    #[test]
    fn empirical_risk_cases() {
        let y = random_vec(10, 1);
        assert_eq!(empirical_risk_ss(&y, &y).unwrap(), 0.0);
        assert_eq!(empirical_risk_ss(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 25.0);
        let f = random_vec(10, 2);
        let mut direct = 0.0;
        for i in 0..10 {
            direct += (f[i] - y[i]) * (f[i] - y[i]);
        }
        assert!((empirical_risk_ss(&f, &y).unwrap() - direct).abs() < 1e-12);
        assert!(empirical_risk_ss(&[1.0], &y).is_err());
    }

    #[test]
    fn penalties() {
        let proj = SmootherStats::projection(4);
        assert_eq!(minimal_penalty(&proj, 1.5), 6.0);
        assert_eq!(minimal_penalty(&proj, 0.0), 0.0);
        assert_eq!(ideal_penalty(&proj, 0.7), 2.0 * 0.7 * 4.0);
        assert_eq!(ideal_penalty(&SmootherStats::projection(0), 3.0), 0.0);
    }

    #[test]
    fn slope_ratio_on_ridge_grid() {
        let fam = SmootherFamily::ridge_path(kernel(25, 3, 4), &LambdaGrid::Default).unwrap();
        for m in fam.members() {
            if m.stats.df > 1e-6 {
                let r = ideal_penalty(&m.stats, 1.0) / minimal_penalty(&m.stats, 1.0);
                assert!(r > 1.0 && r <= 2.0, "ratio {r}");
            }
        }
    }

    #[test]
    fn gcv_cases() {
        let s0 = SmootherStats { df: 0.0, tr_ata: 0.0, minpen_factor: 0.0 };
        assert_eq!(gcv_score(&s0, 12.0, 6), Some(2.0));
        let half = SmootherStats { df: 3.0, tr_ata: 2.0, minpen_factor: 4.0 };
        assert!((gcv_score(&half, 12.0, 6).unwrap() - 8.0).abs() < 1e-12);
        assert!(gcv_score(&half, 13.0, 6).unwrap() > gcv_score(&half, 12.0, 6).unwrap());
        assert_eq!(gcv_score(&SmootherStats::projection(6), 1.0, 6), None);
    }

    #[test]
    fn argmin_rules() {
        let n = 20;
        let fam = SmootherFamily::ridge_path(kernel(n, 2, 3), &LambdaGrid::Default).unwrap();
        let y = random_vec(n, 9);
        let rss = fam.residual_sums(&y).unwrap();
        let none = argmin_over_family(&fam, &rss, PenaltyRule::None).unwrap();
        assert_eq!(none, fam.max_df_member());
        let huge = argmin_over_family(&fam, &rss, PenaltyRule::Minimal(1e12)).unwrap();
        assert_eq!(huge, fam.min_df_member());
        for rule in [PenaltyRule::Minimal(0.3), PenaltyRule::Ideal(0.3), PenaltyRule::Gcv] {
            let got = argmin_over_family(&fam, &rss, rule).unwrap();
            let vals = criterion_values(&fam, &rss, rule);
            let best = vals.iter().map(|v| v.total).fold(f64::INFINITY, f64::min);
            assert_eq!(vals[got].total, best);
            for v in &vals {
                if v.total.is_finite() {
                    assert!((v.total - (v.empirical_risk_ss + v.penalty)).abs() <= 1e-9 * v.total.abs());
                }
            }
        }
    }

    #[test]
    fn ties_go_to_smaller_df() {
        let basis = Mat::<f64>::identity(4, 4);
        let fam = SmootherFamily::nested_projections(basis, &[1, 2, 3]).unwrap();
        // members ordered dims 3, 2, 1
        let totals = [5.0, 5.0, 7.0];
        assert_eq!(argmin_smallest_df(&fam, &totals).unwrap(), 1);
        let totals = [5.0, 6.0, 5.0];
        assert_eq!(argmin_smallest_df(&fam, &totals).unwrap(), 2);
    }

    #[test]
    fn partition_is_deterministic_and_balanced() {
        let a = kfold_partition(23, 5, 42).unwrap();
        let b = kfold_partition(23, 5, 42).unwrap();
        assert_eq!(a, b);
        let sizes: Vec<usize> = a.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![5, 5, 5, 4, 4]);
        let mut all: Vec<usize> = a.concat();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        assert_ne!(a, kfold_partition(23, 5, 43).unwrap());
        assert!(kfold_partition(3, 5, 0).is_err());
        assert!(kfold_partition(10, 1, 0).is_err());
    }

    #[test]
    fn leave_one_out_matches_hand_rolled_loop() {
        let n = 5;
        let pts = PointSet::new(random_vec(n * 2, 17), n, 2).unwrap();
        let k = build_kernel_matrix(&KernelSpec::exponential(), &pts).unwrap();
        let lambdas = vec![0.01, 0.1, 1.0];
        let fam = SmootherFamily::ridge_path(k.clone(), &LambdaGrid::Explicit(lambdas.clone())).unwrap();
        let y = random_vec(n, 18);
        let scores = kfold_cv_scores(&fam, &y, n, 3).unwrap();
        for (id, &lambda) in lambdas.iter().enumerate() {
            let mut total = 0.0;
            for held in 0..n {
                let train: Vec<usize> = (0..n).filter(|&i| i != held).collect();
                let m = train.len();
                let reg =
                    Mat::from_fn(m, m, |a, b| k.get(train[a], train[b]) + if a == b { m as f64 * lambda } else { 0.0 });
                let rhs = Mat::from_fn(m, 1, |a, _| y[train[a]]);
                let alpha = faer::linalg::solvers::Solve::solve(&reg.partial_piv_lu(), &rhs);
                let pred: f64 = (0..m).map(|a| k.get(held, train[a]) * alpha[(a, 0)]).sum();
                total += (pred - y[held]).powi(2);
            }
            let expect = total / n as f64;
            assert!((scores[id] - expect).abs() < 1e-9 * expect.max(1e-12), "{} vs {}", scores[id], expect);
        }
    }

    #[test]
    fn cv_penalizes_shrinking_a_constant_signal() {
        let n = 30;
        let fam = SmootherFamily::ridge_path(kernel(n, 2, 5), &LambdaGrid::Explicit(vec![1e-6, 1e-3, 1e6])).unwrap();
        let y = vec![2.0; n];
        let scores = kfold_cv_scores(&fam, &y, 5, 1).unwrap();
        // λ → ∞ predicts ≈ 0: error ≈ c² = 4
        assert!((scores[2] - 4.0).abs() < 1e-3);
        assert!(scores[0] < scores[2] && scores[1] < scores[2]);
        assert_eq!(scores, kfold_cv_scores(&fam, &y, 5, 1).unwrap());
        assert_eq!(kfold_cv_score(&fam, 1, &y, 5, 1).unwrap(), scores[1]);
    }

    #[test]
    fn cv_rejects_projection_families() {
        let fam = SmootherFamily::nested_projections(Mat::<f64>::identity(6, 6), &[1, 3]).unwrap();
        assert!(matches!(kfold_cv_scores(&fam, &[0.0; 6], 2, 0), Err(Error::Unsupported(_))));
    }
}
