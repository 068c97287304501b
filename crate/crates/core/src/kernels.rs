//! Kernel functions, kernel matrices and their symmetric eigendecomposition.

use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative asymmetry below which a precomputed kernel is symmetrized.
pub const SYMMETRY_TOLERANCE: f64 = 1e-8;

/// Design points, stored row-major (one row per observation).
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    data: Vec<f64>,
    n: usize,
    d: usize,
}

impl PointSet {
    pub fn new(data: Vec<f64>, n: usize, d: usize) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::invalid(format!("point set needs n >= 1 and d >= 1 (got n={n}, d={d})")));
        }
        if data.len() != n * d {
            return Err(Error::invalid(format!(
                "expected {} coordinates for {n}x{d} points, got {}",
                n * d,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite coordinate at row {}, column {}", pos / d, pos % d)));
        }
        Ok(Self { data, n, d })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("rows of unequal length"));
        }
        Self::new(rows.iter().flatten().copied().collect(), n, d)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    /// Keeps only the given coordinates (used for kernels on variable blocks).
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        if cols.is_empty() || cols.iter().any(|&c| c >= self.d) {
            return Err(Error::invalid(format!("column selection {cols:?} out of range for d={}", self.d)));
        }
        let data = (0..self.n)
            .flat_map(|i| cols.iter().map(move |&c| (i, c)))
            .map(|(i, c)| self.data[i * self.d + c])
            .collect();
        Self::new(data, self.n, cols.len())
    }

    /// Rows `idx` in the given order.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let data = idx.iter().flat_map(|&i| self.point(i).iter().copied()).collect();
        Self::new(data, idx.len(), self.d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    /// `k(x, y) = Π_i exp(-|x_i - y_i|)`
    ExponentialProduct,
    /// `k(x, y) = <x, y>`
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    Function(KernelKind),
    /// A user-supplied n×n Gram matrix.
    Precomputed(KernelMatrix),
}

impl KernelSpec {
    pub fn exponential() -> Self {
        KernelSpec::Function(KernelKind::ExponentialProduct)
    }

    pub fn linear() -> Self {
        KernelSpec::Function(KernelKind::Linear)
    }
}

/// Evaluates a closed-form kernel on two points.
pub fn kernel_value(kind: KernelKind, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!("dimension mismatch: {} vs {}", x.len(), y.len())));
    }
    Ok(kernel_value_unchecked(kind, x, y))
}

#[inline]
fn kernel_value_unchecked(kind: KernelKind, x: &[f64], y: &[f64]) -> f64 {
    match kind {
        KernelKind::ExponentialProduct => {
            let l1: f64 = x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum();
            (-l1).exp()
        }
        KernelKind::Linear => x.iter().zip(y).map(|(a, b)| a * b).sum(),
    }
}

/// Symmetric n×n Gram matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    entries: Mat<f64>,
}

impl KernelMatrix {
    /// Wraps a precomputed matrix. Asymmetry up to [`SYMMETRY_TOLERANCE`]
    /// (relative to the largest entry) is averaged away; more is an error.
    pub fn from_matrix(m: Mat<f64>) -> Result<Self> {
        let n = m.nrows();
        if n == 0 || m.ncols() != n {
            return Err(Error::invalid(format!(
                "kernel matrix must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let mut scale = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                let v = m[(i, j)];
                if !v.is_finite() {
                    return Err(Error::invalid(format!("non-finite kernel entry at ({i}, {j})")));
                }
                scale = scale.max(v.abs());
            }
        }
        let mut asym = 0.0f64;
        for j in 0..n {
            for i in 0..j {
                asym = asym.max((m[(i, j)] - m[(j, i)]).abs());
            }
        }
        if asym > SYMMETRY_TOLERANCE * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::invalid(format!("kernel matrix is not symmetric (max |K_ij - K_ji| = {asym:e})")));
        }
        let entries = Mat::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
        Ok(Self { entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("precomputed kernel must be square"));
        }
        Self::from_matrix(Mat::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn as_mat(&self) -> &Mat<f64> {
        &self.entries
    }

    pub fn trace(&self) -> f64 {
        (0..self.n()).map(|i| self.entries[(i, i)]).sum()
    }

    /// Principal submatrix on `rows × cols`.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Mat<f64> {
        Mat::from_fn(rows.len(), cols.len(), |a, b| self.entries[(rows[a], cols[b])])
    }

    /// `Σ_j w_j K_j`.
    pub fn weighted_sum(kernels: &[KernelMatrix], weights: &[f64]) -> Result<Self> {
        let n = kernels.first().map(KernelMatrix::n).ok_or_else(|| Error::invalid("no kernels"))?;
        if kernels.len() != weights.len() {
            return Err(Error::invalid(format!("{} kernels but {} weights", kernels.len(), weights.len())));
        }
        if kernels.iter().any(|k| k.n() != n) {
            return Err(Error::invalid("kernels have different sizes"));
        }
        let mut out = Mat::<f64>::zeros(n, n);
        for (k, &w) in kernels.iter().zip(weights) {
            if w != 0.0 {
                for j in 0..n {
                    for i in 0..n {
                        out[(i, j)] += w * k.entries[(i, j)];
                    }
                }
            }
        }
        Ok(Self { entries: out })
    }
}

/// Assembles `K_ab = k(x_a, x_b)`, evaluating each unordered pair once.
pub fn build_kernel_matrix(spec: &KernelSpec, pts: &PointSet) -> Result<KernelMatrix> {
    match spec {
        KernelSpec::Precomputed(k) => {
            if k.n() != pts.len() {
                return Err(Error::invalid(format!(
                    "precomputed kernel is {0}x{0} but there are {1} points",
                    k.n(),
                    pts.len()
                )));
            }
            Ok(k.clone())
        }
        KernelSpec::Function(kind) => {
            let n = pts.len();
            let mut m = Mat::<f64>::zeros(n, n);
            for a in 0..n {
                for b in 0..=a {
                    let v = kernel_value_unchecked(*kind, pts.point(a), pts.point(b));
                    if !v.is_finite() {
                        return Err(Error::invalid(format!("non-finite kernel value for pair ({a}, {b})")));
                    }
                    m[(a, b)] = v;
                    m[(b, a)] = v;
                }
            }
            Ok(KernelMatrix { entries: m })
        }
    }
}

/// Cross-kernel between two point sets: `rows(a) × rows(b)`.
pub fn cross_kernel(kind: KernelKind, a: &PointSet, b: &PointSet) -> Result<Mat<f64>> {
    if a.dim() != b.dim() {
        return Err(Error::invalid(format!("dimension mismatch: {} vs {}", a.dim(), b.dim())));
    }
    Ok(Mat::from_fn(a.len(), b.len(), |i, j| kernel_value_unchecked(kind, a.point(i), b.point(j))))
}

/// Orthonormal eigenbasis of a kernel matrix with eigenvalues sorted
/// descending and clipped at zero.
#[derive(Debug, Clone)]
pub struct Eigensystem {
    values: Vec<f64>,
    vectors: Mat<f64>,
    clip_count: usize,
    min_raw: f64,
}

impl Eigensystem {
    pub fn n(&self) -> usize {
        self.values.len()
    }

    /// μ_1 ≥ … ≥ μ_n ≥ 0.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column j is the eigenvector of `values()[j]`.
    pub fn vectors(&self) -> &Mat<f64> {
        &self.vectors
    }

    /// Number of negative eigenvalues that were set to zero.
    pub fn clip_count(&self) -> usize {
        self.clip_count
    }

    /// Smallest eigenvalue before clipping.
    pub fn min_raw_eigenvalue(&self) -> f64 {
        self.min_raw
    }

    /// `Qᵀ v`.
    pub fn coefficients(&self, v: &[f64]) -> Vec<f64> {
        let q = &self.vectors;
        (0..q.ncols())
            .map(|j| {
                let col = q.col(j);
                col.iter().zip(v).map(|(a, b)| a * b).sum()
            })
            .collect()
    }

    /// `Q c`.
    pub fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        let q = &self.vectors;
        let n = q.nrows();
        let mut out = vec![0.0; n];
        for (j, &c) in coeffs.iter().enumerate() {
            if c != 0.0 {
                for (o, &qij) in out.iter_mut().zip(q.col(j).iter()) {
                    *o += c * qij;
                }
            }
        }
        out
    }

    /// `Q diag(μ) Qᵀ`.
    pub fn reconstruct(&self) -> Mat<f64> {
        let n = self.n();
        let scaled = Mat::from_fn(n, n, |i, j| self.vectors[(i, j)] * self.values[j]);
        &scaled * self.vectors.transpose()
    }
}

/// Symmetric eigendecomposition; negative round-off eigenvalues are clipped.
pub fn eigendecompose(k: &KernelMatrix) -> Result<Eigensystem> {
    eigendecompose_mat(k.as_mat())
}

pub(crate) fn eigendecompose_mat(m: &Mat<f64>) -> Result<Eigensystem> {
    let n = m.nrows();
    let evd = m.self_adjoint_eigen(Side::Lower).map_err(|e| {
        let scale = m.norm_max();
        let diag_min = (0..n).map(|i| m[(i, i)]).fold(f64::INFINITY, f64::min);
        Error::Numerical(format!(
            "symmetric eigendecomposition did not converge ({e:?}); n={n}, max|K|={scale:e}, min diag={diag_min:e}"
        ))
    })?;
    let s = evd.S().column_vector();
    let u = evd.U();
    // faer returns ascending order
    let order: Vec<usize> = (0..n).rev().collect();
    let raw: Vec<f64> = order.iter().map(|&j| s[j]).collect();
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("eigendecomposition produced non-finite eigenvalues".into()));
    }
    let min_raw = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let clip_count = raw.iter().filter(|&&v| v < 0.0).count();
    let values = raw.into_iter().map(|v| v.max(0.0)).collect();
    let vectors = Mat::from_fn(n, n, |i, j| u[(i, order[j])]);
    Ok(Eigensystem { values, vectors, clip_count, min_raw })
}
