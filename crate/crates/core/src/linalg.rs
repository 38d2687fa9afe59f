//! Dense-matrix primitives: top-k selection, support-restricted least squares
//! and residual energies.
//!
//! Matrices are stored column-major (the `nalgebra` layout), so a column of the
//! sensing matrix is a contiguous slice. Every routine here is a pure function
//! of its inputs.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dimension, domain, Result};

/// A finite, non-empty, column-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    inner: DMatrix<f64>,
}

impl DenseMatrix {
    pub fn new(inner: DMatrix<f64>) -> Result<Self> {
        if inner.nrows() == 0 || inner.ncols() == 0 {
            return domain("matrix must have at least one row and one column");
        }
        if inner.iter().any(|v| !v.is_finite()) {
            return domain("matrix entries must be finite");
        }
        Ok(Self { inner })
    }

    /// Builds a matrix from entries listed row by row.
    pub fn from_row_major(rows: usize, cols: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != rows * cols {
            return dimension(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                entries.len()
            ));
        }
        Self::new(DMatrix::from_row_slice(rows, cols, entries))
    }

    pub fn rows(&self) -> usize {
        self.inner.nrows()
    }

    pub fn cols(&self) -> usize {
        self.inner.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    /// Entries in row-major order, the layout used by the instance JSON schema.
    pub fn to_row_major(&self) -> Vec<f64> {
        self.inner.transpose().as_slice().to_vec()
    }

    #[inline]
    pub fn column(&self, j: usize) -> &[f64] {
        let m = self.rows();
        &self.inner.as_slice()[j * m..(j + 1) * m]
    }

    pub fn column_norms(&self) -> Vec<f64> {
        (0..self.cols()).map(|j| norm2(self.column(j))).collect()
    }

    /// Returns a copy with every non-zero column scaled to unit norm.
    pub fn normalized_columns(&self) -> Self {
        let mut inner = self.inner.clone();
        for mut col in inner.column_iter_mut() {
            let n = col.norm();
            if n > 0.0 {
                col /= n;
            }
        }
        Self { inner }
    }

    /// `Φz`, skipping the zero entries of `z`.
    pub fn mul_vec(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        if z.len() != self.cols() {
            return dimension(format!("vector length {} != cols {}", z.len(), self.cols()));
        }
        let mut out = DVector::zeros(self.rows());
        for (j, &zj) in z.iter().enumerate() {
            if zj != 0.0 {
                axpy(zj, self.column(j), out.as_mut_slice());
            }
        }
        Ok(out)
    }

    /// `Φᵀr`.
    pub fn tr_mul_vec(&self, r: &DVector<f64>) -> Result<DVector<f64>> {
        if r.len() != self.rows() {
            return dimension(format!("vector length {} != rows {}", r.len(), self.rows()));
        }
        let r = r.as_slice();
        Ok(DVector::from_iterator(
            self.cols(),
            (0..self.cols()).map(|j| dot(self.column(j), r)),
        ))
    }

    /// Copies the listed columns, in the given order, into a new matrix.
    pub fn select_columns(&self, cols: &[usize]) -> DMatrix<f64> {
        let m = self.rows();
        let mut data = Vec::with_capacity(m * cols.len());
        for &j in cols {
            data.extend_from_slice(self.column(j));
        }
        DMatrix::from_vec(m, cols.len(), data)
    }

    /// `ΦᵀΦ`.
    pub fn gram(&self) -> DMatrix<f64> {
        self.inner.tr_mul(&self.inner)
    }
}

/// A sorted, duplicate-free set of column indices.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SupportSet(Vec<usize>);

impl SupportSet {
    /// Validates that `indices` is strictly increasing and bounded by `n`.
    pub fn new(indices: Vec<usize>, n: usize) -> Result<Self> {
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return domain("support indices must be strictly increasing");
        }
        if indices.last().is_some_and(|&last| last >= n) {
            return domain(format!("support index out of range for dimension {n}"));
        }
        Ok(Self(indices))
    }

    /// Sorts and deduplicates arbitrary indices.
    pub fn from_unsorted(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Self(indices)
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    /// Indices of the non-zero entries of `v`.
    pub fn of_nonzeros(v: &DVector<f64>) -> Self {
        Self(
            v.iter()
                .enumerate()
                .filter(|(_, &x)| x != 0.0)
                .map(|(i, _)| i)
                .collect(),
        )
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    pub fn is_subset_of(&self, other: &SupportSet) -> bool {
        self.0.iter().all(|&i| other.contains(i))
    }

    pub fn union(&self, other: &SupportSet) -> SupportSet {
        let mut all = self.0.clone();
        all.extend_from_slice(&other.0);
        Self::from_unsorted(all)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }
}

/// Magnitude ordering used for every top-k selection: larger magnitude first,
/// lower index first among equal magnitudes.
#[inline]
fn rank_cmp(v: &[f64], a: usize, b: usize) -> Ordering {
    v[b].abs().total_cmp(&v[a].abs()).then(a.cmp(&b))
}

/// Indices of the `k` largest-magnitude entries of `v`, in rank order.
///
/// The order is total, so the result for `k` is always a prefix of the result
/// for any larger `k`. Candidate supports built from one proxy are therefore
/// nested.
pub fn ranked_top_k(v: &DVector<f64>, k: usize) -> Result<Vec<usize>> {
    let n = v.len();
    if k > n {
        return domain(format!("cannot select {k} entries from a vector of length {n}"));
    }
    let vals = v.as_slice();
    let mut idx: Vec<usize> = (0..n).collect();
    if k == 0 {
        return Ok(Vec::new());
    }
    if k < n {
        idx.select_nth_unstable_by(k - 1, |&a, &b| rank_cmp(vals, a, b));
        idx.truncate(k);
    }
    idx.sort_unstable_by(|&a, &b| rank_cmp(vals, a, b));
    Ok(idx)
}

/// Support of the best `k`-term approximation of `v`.
pub fn top_k_support(v: &DVector<f64>, k: usize) -> Result<SupportSet> {
    Ok(SupportSet::from_unsorted(ranked_top_k(v, k)?))
}

/// Best `k`-term approximation of `v`: everything outside the top-k support is zeroed.
pub fn hard_threshold(v: &DVector<f64>, k: usize) -> Result<DVector<f64>> {
    let keep = ranked_top_k(v, k)?;
    let mut out = DVector::zeros(v.len());
    for i in keep {
        out[i] = v[i];
    }
    Ok(out)
}

/// Least-squares fit restricted to a support.
#[derive(Clone, Debug, PartialEq)]
pub struct LsSolution {
    /// Full-length estimate, zero outside the support.
    pub estimate: DVector<f64>,
    /// Set when the column submatrix was numerically rank deficient; the
    /// estimate is then the minimum-norm solution.
    pub rank_deficient: bool,
}

/// `argmin_{supp(z) ⊆ Λ} ‖y − Φz‖`, computed from a Householder QR of `Φ_Λ`.
pub fn least_squares_on_support(
    phi: &DenseMatrix,
    y: &DVector<f64>,
    support: &SupportSet,
) -> Result<LsSolution> {
    check_rows(phi, y)?;
    if let Some(&last) = support.as_slice().last() {
        if last >= phi.cols() {
            return domain("support index exceeds the number of columns");
        }
    }
    let qr = ColumnQr::new(phi, support.as_slice());
    let fit = qr.solve_prefix(phi, y, support.len());
    Ok(LsSolution {
        estimate: fit.scatter(phi.cols()),
        rank_deficient: fit.rank_deficient,
    })
}

/// `‖y − Φz‖²`.
pub fn residual_energy(phi: &DenseMatrix, z: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
    check_rows(phi, y)?;
    let fit = phi.mul_vec(z)?;
    Ok(y.iter().zip(fit.iter()).map(|(a, b)| (a - b) * (a - b)).sum())
}

fn check_rows(phi: &DenseMatrix, y: &DVector<f64>) -> Result<()> {
    if y.len() != phi.rows() {
        return dimension(format!(
            "measurement length {} != matrix rows {}",
            y.len(),
            phi.rows()
        ));
    }
    Ok(())
}

/// Coefficients of a fit on an ordered column list.
#[derive(Clone, Debug)]
pub(crate) struct PrefixFit {
    pub cols: Vec<usize>,
    pub coeffs: Vec<f64>,
    pub rank_deficient: bool,
}

impl PrefixFit {
    pub fn scatter(&self, n: usize) -> DVector<f64> {
        let mut out = DVector::zeros(n);
        for (&j, &c) in self.cols.iter().zip(&self.coeffs) {
            out[j] = c;
        }
        out
    }
}

/// Householder QR of an ordered column subset of `Φ`.
///
/// Because Householder QR processes columns left to right, the leading `k`
/// columns of the factorization are the factorization of the first `k`
/// columns alone. One factorization serves every prefix of the column list.
pub(crate) struct ColumnQr {
    m: usize,
    cols: Vec<usize>,
    // Column-major m x n. Strict upper triangle holds R, the rest holds the
    // Householder vectors.
    qr: Vec<f64>,
    rdiag: Vec<f64>,
    beta: Vec<f64>,
    rank_tol: f64,
}

impl ColumnQr {
    pub fn new(phi: &DenseMatrix, cols: &[usize]) -> Self {
        let m = phi.rows();
        let n = cols.len();
        let mut qr = Vec::with_capacity(m * n);
        let mut max_norm = 0.0f64;
        for &j in cols {
            let c = phi.column(j);
            max_norm = max_norm.max(norm2(c));
            qr.extend_from_slice(c);
        }
        let rank_tol = f64::EPSILON * (m.max(n) as f64) * max_norm;
        let mut rdiag = vec![0.0; n];
        let mut beta = vec![0.0; n];
        for j in 0..n.min(m) {
            let (head, tail) = qr.split_at_mut((j + 1) * m);
            let v = &mut head[j * m + j..];
            let alpha_norm = norm2(v);
            if alpha_norm == 0.0 {
                continue;
            }
            let alpha = if v[0] > 0.0 { -alpha_norm } else { alpha_norm };
            v[0] -= alpha;
            let vtv = dot(v, v);
            let b = if vtv > 0.0 { 2.0 / vtv } else { 0.0 };
            rdiag[j] = alpha;
            beta[j] = b;
            for col in tail.chunks_exact_mut(m) {
                let target = &mut col[j..];
                let s = b * dot(v, target);
                axpy(-s, v, target);
            }
        }
        Self {
            m,
            cols: cols.to_vec(),
            qr,
            rdiag,
            beta,
            rank_tol,
        }
    }

    fn qt_mul(&self, y: &DVector<f64>, upto: usize) -> Vec<f64> {
        let m = self.m;
        let mut out = y.as_slice().to_vec();
        for j in 0..upto.min(m) {
            if self.beta[j] == 0.0 {
                continue;
            }
            let v = &self.qr[j * m + j..(j + 1) * m];
            let target = &mut out[j..];
            let s = self.beta[j] * dot(v, target);
            axpy(-s, v, target);
        }
        out
    }

    /// Least-squares fit on the first `k` columns.
    pub fn solve_prefix(&self, phi: &DenseMatrix, y: &DVector<f64>, k: usize) -> PrefixFit {
        let cols = self.cols[..k].to_vec();
        let deficient = k > self.m || self.rdiag[..k].iter().any(|d| d.abs() <= self.rank_tol);
        if deficient {
            return PrefixFit {
                coeffs: min_norm_fit(phi, y, &cols, self.rank_tol),
                cols,
                rank_deficient: true,
            };
        }
        let qty = self.qt_mul(y, k);
        let m = self.m;
        let mut coeffs = qty[..k].to_vec();
        for i in (0..k).rev() {
            let mut s = coeffs[i];
            for (j, cj) in coeffs.iter().enumerate().take(k).skip(i + 1) {
                s -= self.qr[j * m + i] * cj;
            }
            coeffs[i] = s / self.rdiag[i];
        }
        PrefixFit {
            cols,
            coeffs,
            rank_deficient: false,
        }
    }
}

fn min_norm_fit(phi: &DenseMatrix, y: &DVector<f64>, cols: &[usize], tol: f64) -> Vec<f64> {
    if cols.is_empty() {
        return Vec::new();
    }
    let sub = phi.select_columns(cols);
    let svd = sub.svd(true, true);
    match svd.solve(y, tol) {
        Ok(z) => z.iter().copied().collect(),
        Err(_) => vec![0.0; cols.len()],
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
