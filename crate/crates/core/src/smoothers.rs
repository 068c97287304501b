//! Families of symmetric linear smoothers `A_λ` with spectrum in `[0, 1]`.
//!
//! Every family is stored as a list of *blocks*, each an orthonormal basis
//! in which the member smoothers are diagonal:
//!
//! * ridge path: one eigenbasis of `K`, members `diag(μ_j / (μ_j + nλ))`;
//! * projection set: one basis per nested sequence, members keep a prefix;
//! * MKL grid: one eigenbasis per kernel combination `Σ η_j K_j`.
//!
//! Working in the basis makes all residual and risk computations `O(n)` per
//! member once a vector has been projected (`O(n²)` per block).

use faer::Mat;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{eigendecompose, Eigensystem, KernelMatrix};

/// Trace statistics of one smoother.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmootherStats {
    /// `tr(A)`, the effective degrees of freedom.
    pub df: f64,
    /// `tr(AᵀA)`.
    pub tr_ata: f64,
    /// `2 tr(A) - tr(AᵀA)`.
    pub minpen_factor: f64,
}

impl SmootherStats {
    fn from_shrinkage(factors: impl Iterator<Item = f64>) -> Self {
        let (mut df, mut tr_ata, mut minpen) = (0.0, 0.0, 0.0);
        for s in factors {
            df += s;
            tr_ata += s * s;
            minpen += s * (2.0 - s);
        }
        Self { df, tr_ata, minpen_factor: minpen }
    }

    pub fn projection(dim: usize) -> Self {
        let k = dim as f64;
        Self { df: k, tr_ata: k, minpen_factor: k }
    }
}

/// `μ / (μ + nλ)`, with the `0/0` case (λ = 0 on a null direction) set to 0.
#[inline]
pub fn ridge_shrinkage(mu: f64, shrink: f64) -> f64 {
    if mu <= 0.0 {
        0.0
    } else {
        mu / (mu + shrink)
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0) || lambda.is_nan() {
        return Err(Error::invalid(format!("regularization parameter must be >= 0, got {lambda}")));
    }
    Ok(())
}

/// Eigenbasis formulas for `A_λ = K (K + nλ I)⁻¹`.
pub fn ridge_stats(eig: &Eigensystem, lambda: f64, n: usize) -> Result<SmootherStats> {
    check_lambda(lambda)?;
    let shrink = n as f64 * lambda;
    Ok(SmootherStats::from_shrinkage(eig.values().iter().map(|&mu| ridge_shrinkage(mu, shrink))))
}

/// `Q diag(μ_j / (μ_j + nλ)) Qᵀ Y`.
pub fn ridge_fit(eig: &Eigensystem, lambda: f64, y: &[f64]) -> Result<Vec<f64>> {
    check_lambda(lambda)?;
    check_len(eig.n(), y.len())?;
    let shrink = eig.n() as f64 * lambda;
    let mut c = eig.coefficients(y);
    for (cj, &mu) in c.iter_mut().zip(eig.values()) {
        *cj *= ridge_shrinkage(mu, shrink);
    }
    Ok(eig.synthesize(&c))
}

fn check_len(n: usize, got: usize) -> Result<()> {
    if n != got {
        return Err(Error::invalid(format!("expected a vector of length {n}, got {got}")));
    }
    Ok(())
}

fn check_orthonormal(basis: &Mat<f64>) -> Result<()> {
    let k = basis.ncols();
    if k == 0 {
        return Ok(());
    }
    let gram = basis.transpose() * basis;
    for j in 0..k {
        for i in 0..k {
            let expect = if i == j { 1.0 } else { 0.0 };
            if (gram[(i, j)] - expect).abs() > 1e-8 {
                return Err(Error::invalid(format!(
                    "basis columns are not orthonormal (BᵀB[{i},{j}] = {})",
                    gram[(i, j)]
                )));
            }
        }
    }
    Ok(())
}

/// Orthogonal projection onto the span of orthonormal columns `B`:
/// returns the stats (`df = tr_ata = k`) and `B (Bᵀ Y)`.
pub fn projection_smoother(basis: &Mat<f64>, y: &[f64]) -> Result<(SmootherStats, Vec<f64>)> {
    check_len(basis.nrows(), y.len())?;
    check_orthonormal(basis)?;
    let k = basis.ncols();
    let mut fit = vec![0.0; y.len()];
    for j in 0..k {
        let col = basis.col(j);
        let c: f64 = col.iter().zip(y).map(|(a, b)| a * b).sum();
        for (f, &b) in fit.iter_mut().zip(col.iter()) {
            *f += c * b;
        }
    }
    Ok((SmootherStats::projection(k), fit))
}

/// `Σ_j η_j K_j` for nonnegative, not-all-zero weights.
pub fn mkl_effective_kernel(kernels: &[KernelMatrix], eta: &[f64]) -> Result<KernelMatrix> {
    check_weights(eta)?;
    KernelMatrix::weighted_sum(kernels, eta)
}

pub(crate) fn check_weights(eta: &[f64]) -> Result<()> {
    if eta.is_empty() {
        return Err(Error::invalid("kernel weights are empty"));
    }
    if eta.iter().any(|&e| !(e >= 0.0) || !e.is_finite()) {
        return Err(Error::invalid(format!("kernel weights must be finite and >= 0, got {eta:?}")));
    }
    if eta.iter().all(|&e| e == 0.0) {
        return Err(Error::invalid("kernel weights are all zero"));
    }
    Ok(())
}

/// Geometric grid of `size` points between `lo` and `hi` inclusive.
pub fn geometric_grid(lo: f64, hi: f64, size: usize) -> Vec<f64> {
    assert!(size >= 2 && lo > 0.0 && hi > lo);
    let step = (hi / lo).ln() / (size - 1) as f64;
    (0..size).map(|i| if i + 1 == size { hi } else { lo * (step * i as f64).exp() }).collect()
}

/// Default λ grid: `max(n, 100)` geometric values of `nλ` spanning
/// `[max(μ_n, 1e-12 μ_1) / 10, 10 μ_1]`, returned as λ in increasing order
/// (so df decreases along the grid).
pub fn default_ridge_lambdas(eig: &Eigensystem, size: Option<usize>) -> Result<Vec<f64>> {
    let n = eig.n();
    let mu = eig.values();
    let top = mu[0];
    if !(top > 0.0) {
        return Err(Error::invalid("kernel matrix is null; no ridge path can be built"));
    }
    let bottom = mu[n - 1].max(top * 1e-12);
    let size = size.unwrap_or_else(|| n.max(100));
    if size < 2 {
        return Err(Error::invalid("a ridge grid needs at least 2 points"));
    }
    Ok(geometric_grid(bottom / 10.0, 10.0 * top, size).into_iter().map(|shrink| shrink / n as f64).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MemberParam {
    Ridge { lambda: f64 },
    Projection { basis: usize, dim: usize },
    Mkl { eta: Vec<f64>, lambda: f64 },
}

/// One smoother of a family.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Member {
    pub block: usize,
    pub param: MemberParam,
    pub stats: SmootherStats,
}

impl Member {
    pub fn df(&self) -> f64 {
        self.stats.df
    }

    fn shrinkage(&self, j: usize, block: &Block) -> f64 {
        match (&self.param, block) {
            (MemberParam::Ridge { lambda } | MemberParam::Mkl { lambda, .. }, Block::Spectral { eig, .. }) => {
                ridge_shrinkage(eig.values()[j], eig.n() as f64 * lambda)
            }
            (MemberParam::Projection { dim, .. }, Block::Projection { .. }) => {
                if j < *dim {
                    1.0
                } else {
                    0.0
                }
            }
            _ => unreachable!("member/block mismatch"),
        }
    }
}

#[derive(Debug, Clone)]
enum Block {
    Spectral { eig: Eigensystem, kernel: KernelMatrix },
    Projection { basis: Mat<f64> },
}

impl Block {
    fn basis(&self) -> &Mat<f64> {
        match self {
            Block::Spectral { eig, .. } => eig.vectors(),
            Block::Projection { basis } => basis,
        }
    }

    fn is_complete(&self) -> bool {
        let b = self.basis();
        b.ncols() == b.nrows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    RidgePath,
    ProjectionSet,
    MklGrid,
}

/// Projections of one vector onto every block basis of a family.
#[derive(Debug, Clone)]
pub struct Coefficients {
    blocks: Vec<Vec<f64>>,
    norm_sq: f64,
}

impl Coefficients {
    pub fn block(&self, b: usize) -> &[f64] {
        &self.blocks[b]
    }

    pub fn norm_sq(&self) -> f64 {
        self.norm_sq
    }
}

/// An indexed, immutable family `{A_λ}_{λ∈Λ}`.
#[derive(Debug, Clone)]
pub struct SmootherFamily {
    kind: FamilyKind,
    n: usize,
    blocks: Vec<Block>,
    members: Vec<Member>,
    base_kernels: Vec<KernelMatrix>,
}

/// How the λ values of a spectral block are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum LambdaGrid {
    /// `max(n, 100)` points, see [`default_ridge_lambdas`].
    Default,
    /// Default span with a custom number of points.
    Size(usize),
    Explicit(Vec<f64>),
}

impl LambdaGrid {
    fn resolve(&self, eig: &Eigensystem) -> Result<Vec<f64>> {
        let mut lambdas = match self {
            LambdaGrid::Default => default_ridge_lambdas(eig, None)?,
            LambdaGrid::Size(s) => default_ridge_lambdas(eig, Some(*s))?,
            LambdaGrid::Explicit(v) => v.clone(),
        };
        for &l in &lambdas {
            check_lambda(l)?;
        }
        lambdas.sort_by(f64::total_cmp);
        Ok(lambdas)
    }
}

impl SmootherFamily {
    /// Kernel ridge path `A_λ = K (K + nλ I)⁻¹`, λ increasing.
    pub fn ridge_path(kernel: KernelMatrix, grid: &LambdaGrid) -> Result<Self> {
        let eig = eigendecompose(&kernel)?;
        Self::ridge_path_from_parts(kernel, eig, grid)
    }

    pub fn ridge_path_from_parts(kernel: KernelMatrix, eig: Eigensystem, grid: &LambdaGrid) -> Result<Self> {
        let n = kernel.n();
        let lambdas = grid.resolve(&eig)?;
        let members = lambdas
            .iter()
            .map(|&lambda| {
                Ok(Member { block: 0, param: MemberParam::Ridge { lambda }, stats: ridge_stats(&eig, lambda, n)? })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::finish(FamilyKind::RidgePath, n, vec![Block::Spectral { eig, kernel }], members, Vec::new())
    }

    /// One member per basis (each basis used in full).
    pub fn projection_set(bases: Vec<Mat<f64>>) -> Result<Self> {
        let n = bases.first().map(Mat::nrows).ok_or_else(|| Error::invalid("no projection bases"))?;
        let mut blocks = Vec::with_capacity(bases.len());
        let mut members = Vec::with_capacity(bases.len());
        for (b, basis) in bases.into_iter().enumerate() {
            if basis.nrows() != n {
                return Err(Error::invalid("projection bases have different row counts"));
            }
            check_orthonormal(&basis)?;
            let dim = basis.ncols();
            members.push(Member {
                block: b,
                param: MemberParam::Projection { basis: b, dim },
                stats: SmootherStats::projection(dim),
            });
            blocks.push(Block::Projection { basis });
        }
        Self::finish(FamilyKind::ProjectionSet, n, blocks, members, Vec::new())
    }

    /// Nested projections onto the first `k` columns of `basis`, for each
    /// `k` in `dims`. Members are ordered by decreasing dimension.
    pub fn nested_projections(basis: Mat<f64>, dims: &[usize]) -> Result<Self> {
        let n = basis.nrows();
        check_orthonormal(&basis)?;
        let mut dims = dims.to_vec();
        dims.sort_unstable_by(|a, b| b.cmp(a));
        dims.dedup();
        if let Some(&k) = dims.iter().find(|&&k| k > basis.ncols()) {
            return Err(Error::invalid(format!("dimension {k} exceeds the {} available columns", basis.ncols())));
        }
        let members = dims
            .iter()
            .map(|&dim| Member {
                block: 0,
                param: MemberParam::Projection { basis: 0, dim },
                stats: SmootherStats::projection(dim),
            })
            .collect();
        Self::finish(FamilyKind::ProjectionSet, n, vec![Block::Projection { basis }], members, Vec::new())
    }

    /// Discrete MKL family: for each weight vector η, the ridge path of
    /// `Σ η_j K_j` over `grid`.
    pub fn mkl_grid(kernels: Vec<KernelMatrix>, etas: &[Vec<f64>], grid: &LambdaGrid) -> Result<Self> {
        let n = kernels.first().map(KernelMatrix::n).ok_or_else(|| Error::invalid("no kernels"))?;
        if etas.is_empty() {
            return Err(Error::invalid("empty η grid"));
        }
        let mut blocks = Vec::with_capacity(etas.len());
        let mut members = Vec::new();
        for (b, eta) in etas.iter().enumerate() {
            if eta.len() != kernels.len() {
                return Err(Error::invalid(format!("η has {} weights for {} kernels", eta.len(), kernels.len())));
            }
            let kernel = mkl_effective_kernel(&kernels, eta)?;
            let eig = eigendecompose(&kernel)?;
            for lambda in grid.resolve(&eig)? {
                members.push(Member {
                    block: b,
                    param: MemberParam::Mkl { eta: eta.clone(), lambda },
                    stats: ridge_stats(&eig, lambda, n)?,
                });
            }
            blocks.push(Block::Spectral { eig, kernel });
        }
        Self::finish(FamilyKind::MklGrid, n, blocks, members, kernels)
    }

    fn finish(
        kind: FamilyKind,
        n: usize,
        blocks: Vec<Block>,
        members: Vec<Member>,
        base_kernels: Vec<KernelMatrix>,
    ) -> Result<Self> {
        if members.len() < 2 {
            return Err(Error::invalid(format!("a smoother family needs at least 2 members, got {}", members.len())));
        }
        Ok(Self { kind, n, blocks, members, base_kernels })
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    /// Sample size.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn member(&self, id: usize) -> &Member {
        &self.members[id]
    }

    pub fn stats(&self, id: usize) -> SmootherStats {
        self.members[id].stats
    }

    /// The kernels combined by an MKL grid (empty for other families).
    pub fn base_kernels(&self) -> &[KernelMatrix] {
        &self.base_kernels
    }

    /// Eigensystem of the kernel behind a spectral block.
    pub fn eigensystem(&self, block: usize) -> Option<&Eigensystem> {
        match &self.blocks[block] {
            Block::Spectral { eig, .. } => Some(eig),
            Block::Projection { .. } => None,
        }
    }

    /// Kernel behind a spectral block (the combined kernel for MKL).
    pub fn kernel(&self, block: usize) -> Option<&KernelMatrix> {
        match &self.blocks[block] {
            Block::Spectral { kernel, .. } => Some(kernel),
            Block::Projection { .. } => None,
        }
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    /// Diagonal of member `id` in its block basis.
    pub fn shrinkage(&self, id: usize) -> Vec<f64> {
        let m = &self.members[id];
        let block = &self.blocks[m.block];
        (0..block.basis().ncols()).map(|j| m.shrinkage(j, block)).collect()
    }

    pub fn coefficients(&self, v: &[f64]) -> Result<Coefficients> {
        check_len(self.n, v.len())?;
        let blocks = self
            .blocks
            .iter()
            .map(|b| match b {
                Block::Spectral { eig, .. } => eig.coefficients(v),
                Block::Projection { basis } => {
                    (0..basis.ncols()).map(|j| basis.col(j).iter().zip(v).map(|(a, b)| a * b).sum()).collect()
                }
            })
            .collect();
        let norm_sq = v.iter().map(|x| x * x).sum();
        Ok(Coefficients { blocks, norm_sq })
    }

    /// `‖A_id · input − target‖²` from precomputed coefficients.
    pub fn distance_sq(&self, id: usize, input: &Coefficients, target: &Coefficients) -> f64 {
        let m = &self.members[id];
        let block = &self.blocks[m.block];
        let (cin, ctg) = (&input.blocks[m.block], &target.blocks[m.block]);
        if block.is_complete() {
            (0..cin.len())
                .map(|j| {
                    let r = m.shrinkage(j, block) * cin[j] - ctg[j];
                    r * r
                })
                .sum()
        } else {
            // incomplete basis: ‖Bs∘c‖² − 2⟨s∘c, Bᵀt⟩ + ‖t‖²
            let mut out = target.norm_sq;
            for j in 0..cin.len() {
                let sc = m.shrinkage(j, block) * cin[j];
                out += sc * sc - 2.0 * sc * ctg[j];
            }
            out.max(0.0)
        }
    }

    /// `‖(I − A_λ) Y‖²` for every member.
    pub fn residual_sums(&self, y: &[f64]) -> Result<Vec<f64>> {
        let c = self.coefficients(y)?;
        Ok((0..self.len()).map(|id| self.distance_sq(id, &c, &c)).collect())
    }

    /// `A_id Y`.
    pub fn fit(&self, id: usize, y: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n, y.len())?;
        let m = &self.members[id];
        let block = &self.blocks[m.block];
        let basis = block.basis();
        let mut out = vec![0.0; self.n];
        for j in 0..basis.ncols() {
            let s = m.shrinkage(j, block);
            if s == 0.0 {
                continue;
            }
            let col = basis.col(j);
            let c: f64 = col.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() * s;
            for (o, &q) in out.iter_mut().zip(col.iter()) {
                *o += c * q;
            }
        }
        Ok(out)
    }

    /// Explicit n×n matrix of a member (for checks on small problems).
    pub fn member_matrix(&self, id: usize) -> Mat<f64> {
        let m = &self.members[id];
        let block = &self.blocks[m.block];
        let basis = block.basis();
        let s = self.shrinkage(id);
        let scaled = Mat::from_fn(self.n, basis.ncols(), |i, j| basis[(i, j)] * s[j]);
        &scaled * basis.transpose()
    }

    /// Indices of all members sorted by df ascending (stable).
    pub fn order_by_df(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| self.members[a].stats.df.total_cmp(&self.members[b].stats.df));
        idx
    }

    /// Member with the largest df (first such in index order).
    pub fn max_df_member(&self) -> usize {
        (0..self.len()).fold(0, |best, i| if self.members[i].stats.df > self.members[best].stats.df { i } else { best })
    }

    /// Member with the smallest df (first such in index order).
    pub fn min_df_member(&self) -> usize {
        (0..self.len()).fold(0, |best, i| if self.members[i].stats.df < self.members[best].stats.df { i } else { best })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{build_kernel_matrix, KernelSpec, PointSet};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_kernel(n: usize, d: usize, seed: u64) -> KernelMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
        build_kernel_matrix(&KernelSpec::exponential(), &PointSet::new(data, n, d).unwrap()).unwrap()
    }

    fn random_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    fn dense_ridge(k: &KernelMatrix, shrink: f64) -> Mat<f64> {
        let n = k.n();
        let reg = Mat::from_fn(n, n, |i, j| k.get(i, j) + if i == j { shrink } else { 0.0 });
        let inv = faer::linalg::solvers::Solve::solve(&reg.partial_piv_lu(), Mat::<f64>::identity(n, n));
        k.as_mat() * &inv
    }

    fn trace(m: &Mat<f64>) -> f64 {
        (0..m.nrows()).map(|i| m[(i, i)]).sum()
    }

    fn orthonormal_basis(n: usize, k: usize, seed: u64) -> Mat<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Mat::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal));
        g.qr().compute_thin_Q()
    }

    #[test]
    fn flat_spectrum_half_shrinkage() {
        let n = 8;
        let c = 2.5;
        let k = KernelMatrix::from_matrix(Mat::from_fn(n, n, |i, j| if i == j { c } else { 0.0 })).unwrap();
        let eig = eigendecompose(&k).unwrap();
        let s = ridge_stats(&eig, c / n as f64, n).unwrap();
        assert!((s.df - n as f64 / 2.0).abs() < 1e-12);
        assert!((s.tr_ata - n as f64 / 4.0).abs() < 1e-12);
        assert!((s.minpen_factor - 3.0 * n as f64 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn huge_lambda_shrinks_to_zero() {
        let k = random_kernel(6, 2, 3);
        let eig = eigendecompose(&k).unwrap();
        let s = ridge_stats(&eig, 1e12, 6).unwrap();
        assert!(s.df < 1e-9);
        let y = random_vec(6, 4);
        let fit = ridge_fit(&eig, 1e12, &y).unwrap();
        assert!(fit.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn lambda_zero_reproduces_data() {
        let k = random_kernel(5, 3, 9);
        let eig = eigendecompose(&k).unwrap();
        assert!(eig.values()[4] > 0.0);
        let y = random_vec(5, 2);
        let fit = ridge_fit(&eig, 0.0, &y).unwrap();
        for (a, b) in fit.iter().zip(&y) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!(ridge_stats(&eig, -1.0, 5).is_err());
    }

    #[test]
    fn lambda_zero_singular_kernel_uses_limit_convention() {
        let k = KernelMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let eig = eigendecompose(&k).unwrap();
        let s = ridge_stats(&eig, 0.0, 2).unwrap();
        assert!((s.df - 1.0).abs() < 1e-12);
        assert!((s.tr_ata - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ridge_matches_dense_inverse() {
        let k = random_kernel(5, 2, 21);
        let eig = eigendecompose(&k).unwrap();
        let n = 5;
        let lambda = 1.0 / n as f64;
        let a = dense_ridge(&k, 1.0);
        let ata = a.transpose() * &a;
        let s = ridge_stats(&eig, lambda, n).unwrap();
        assert!((s.df - trace(&a)).abs() < 1e-10 * trace(&a));
        assert!((s.tr_ata - trace(&ata)).abs() < 1e-10 * trace(&ata));
        assert!((s.minpen_factor - (2.0 * trace(&a) - trace(&ata))).abs() < 1e-10);
        let y = random_vec(5, 5);
        let fit = ridge_fit(&eig, lambda, &y).unwrap();
        for i in 0..n {
            let dense: f64 = (0..n).map(|j| a[(i, j)] * y[j]).sum();
            assert!((fit[i] - dense).abs() < 1e-10);
        }
    }

    #[test]
    fn projection_smoother_edge_cases() {
        let n = 6;
        let y = random_vec(n, 1);
        let full = orthonormal_basis(n, n, 2);
        let (s, fit) = projection_smoother(&full, &y).unwrap();
        assert_eq!(s.df, n as f64);
        for (a, b) in fit.iter().zip(&y) {
            assert!((a - b).abs() < 1e-12);
        }
        let empty = Mat::<f64>::zeros(n, 0);
        let (s, fit) = projection_smoother(&empty, &y).unwrap();
        assert_eq!(s.df, 0.0);
        assert!(fit.iter().all(|&v| v == 0.0));
        let bad = Mat::from_fn(n, 2, |i, _| i as f64);
        assert!(projection_smoother(&bad, &y).is_err());
    }

    #[test]
    fn projection_is_idempotent_and_symmetric() {
        let b = orthonormal_basis(7, 3, 8);
        let fam = SmootherFamily::projection_set(vec![b.clone(), orthonormal_basis(7, 1, 9)]).unwrap();
        let a = fam.member_matrix(0);
        let a2 = &a * &a;
        for i in 0..7 {
            for j in 0..7 {
                assert!((a2[(i, j)] - a[(i, j)]).abs() < 1e-10);
                assert!((a[(i, j)] - a[(j, i)]).abs() < 1e-10);
            }
        }
        let s = fam.stats(0);
        assert_eq!((s.df, s.tr_ata, s.minpen_factor), (3.0, 3.0, 3.0));
    }

    #[test]
    fn mkl_effective_kernel_cases() {
        let k1 = random_kernel(3, 2, 1);
        let k2 = random_kernel(3, 2, 2);
        let same = mkl_effective_kernel(std::slice::from_ref(&k1), &[1.0]).unwrap();
        assert_eq!(same, k1);
        let first = mkl_effective_kernel(&[k1.clone(), k2.clone()], &[1.0, 0.0]).unwrap();
        assert_eq!(first, k1);
        let mix = mkl_effective_kernel(&[k1.clone(), k2.clone()], &[2.0, 3.0]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((mix.get(i, j) - (2.0 * k1.get(i, j) + 3.0 * k2.get(i, j))).abs() < 1e-15);
            }
        }
        assert!(mkl_effective_kernel(&[k1.clone(), k2.clone()], &[0.0, 0.0]).is_err());
        assert!(mkl_effective_kernel(&[k1, k2], &[-1.0, 2.0]).is_err());
    }

    #[test]
    fn ridge_path_ordering_and_trace_inequalities() {
        let fam = SmootherFamily::ridge_path(random_kernel(30, 3, 5), &LambdaGrid::Default).unwrap();
        assert_eq!(fam.len(), 100);
        for w in fam.members().windows(2) {
            assert!(w[1].stats.df < w[0].stats.df);
            assert!(w[1].stats.tr_ata < w[0].stats.tr_ata);
            assert!(w[1].stats.minpen_factor < w[0].stats.minpen_factor);
        }
        for m in fam.members() {
            let s = m.stats;
            assert!(0.0 <= s.tr_ata && s.tr_ata <= s.df && s.df <= s.minpen_factor && s.minpen_factor <= 2.0 * s.df);
            assert!(s.df <= 30.0);
        }
        // straddles both regimes
        assert!(fam.member(0).stats.df > 15.0);
        assert!(fam.member(fam.len() - 1).stats.df < (30f64).sqrt());
    }

    #[test]
    fn distance_matches_explicit_fit() {
        let fam = SmootherFamily::ridge_path(random_kernel(12, 2, 6), &LambdaGrid::Size(10)).unwrap();
        let y = random_vec(12, 7);
        let f = random_vec(12, 8);
        let cy = fam.coefficients(&y).unwrap();
        let cf = fam.coefficients(&f).unwrap();
        for id in 0..fam.len() {
            let fit = fam.fit(id, &y).unwrap();
            let direct: f64 = fit.iter().zip(&f).map(|(a, b)| (a - b).powi(2)).sum();
            assert!((fam.distance_sq(id, &cy, &cf) - direct).abs() < 1e-10 * direct.max(1.0));
        }
    }

    #[test]
    fn incomplete_projection_distance() {
        let fam = SmootherFamily::nested_projections(orthonormal_basis(9, 4, 3), &[0, 2, 4]).unwrap();
        assert_eq!(fam.members().iter().map(|m| m.stats.df).collect::<Vec<_>>(), vec![4.0, 2.0, 0.0]);
        let y = random_vec(9, 1);
        let rss = fam.residual_sums(&y).unwrap();
        for (id, r) in rss.iter().enumerate() {
            let fit = fam.fit(id, &y).unwrap();
            let direct: f64 = fit.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum();
            assert!((r - direct).abs() < 1e-10);
        }
    }

    #[test]
    fn family_needs_two_members() {
        let err = SmootherFamily::ridge_path(random_kernel(5, 2, 1), &LambdaGrid::Explicit(vec![0.1]));
        assert!(err.is_err());
    }
}
