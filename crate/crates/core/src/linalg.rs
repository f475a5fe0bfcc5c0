//! Sparse matrix plumbing: CSR storage, products, an envelope Cholesky
//! factorization for sparse SPD systems, and spectral estimates.
//!
//! Dense eigenvalue and singular value decompositions are delegated to
//! nalgebra; the sparse side (storage, products, triple products, the
//! envelope factorization, power iteration) is implemented here because the
//! solver's cost model depends on it: the grid Hessians are banded, so an
//! envelope factorization runs in O(n b^2) instead of the dense O(n^3).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Compressed sparse row matrix with sorted, duplicate-free column indices
/// per row. Construction goes through [`CooBuilder`] or the conversion
/// helpers, which establish that ordering; every operation preserves it, so
/// identical inputs always produce bit-identical results.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Coordinate-format accumulator used to assemble a [`CsrMatrix`].
/// Duplicate entries are summed.
#[derive(Debug, Clone)]
pub struct CooBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl CooBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        CooBuilder { nrows, ncols, entries: Vec::new() }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        CooBuilder { nrows, ncols, entries: Vec::with_capacity(cap) }
    }

    /// Records `(i, j, v)`. Panics on out-of-range indices; assembly code is
    /// expected to get this right unconditionally.
    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        assert!(i < self.nrows && j < self.ncols, "entry ({i}, {j}) outside {}x{}", self.nrows, self.ncols);
        self.entries.push((i, j, v));
    }

    pub fn build(mut self) -> CsrMatrix {
        self.entries.sort_unstable_by_key(|a| (a.0, a.1));
        let mut row_ptr = Vec::with_capacity(self.nrows + 1);
        let mut col_idx = Vec::with_capacity(self.entries.len());
        let mut values = Vec::with_capacity(self.entries.len());
        row_ptr.push(0);
        let mut row = 0usize;
        for (i, j, v) in self.entries {
            while row < i {
                row_ptr.push(col_idx.len());
                row += 1;
            }
            if col_idx.len() > row_ptr[row] && *col_idx.last().unwrap() == j {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
            }
        }
        while row < self.nrows {
            row_ptr.push(col_idx.len());
            row += 1;
        }
        CsrMatrix { nrows: self.nrows, ncols: self.ncols, row_ptr, col_idx, values }
    }
}

impl CsrMatrix {
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn identity(n: usize) -> Self {
        let mut b = CooBuilder::with_capacity(n, n, n);
        for i in 0..n {
            b.push(i, i, 1.0);
        }
        b.build()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    /// Entry `(i, j)`, zero when not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> DVector<f64> {
        DVector::from_fn(self.nrows.min(self.ncols), |i, _| self.get(i, i))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.ncols, "matvec shape");
        let mut y = DVector::zeros(self.nrows);
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                acc += v * x[*c];
            }
            y[i] = acc;
        }
        y
    }

    /// Computes `A' x` without materializing the transpose.
    pub fn transpose_matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.nrows, "transpose_matvec shape");
        let mut y = DVector::zeros(self.ncols);
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            let xi = x[i];
            for (c, v) in cols.iter().zip(vals) {
                y[*c] += v * xi;
            }
        }
        y
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let row_ptr = counts.clone();
        let mut col_idx = vec![0usize; self.nnz()];
        let mut values = vec![0.0f64; self.nnz()];
        let mut next = counts;
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                let k = next[*c];
                col_idx[k] = i;
                values[k] = *v;
                next[*c] += 1;
            }
        }
        CsrMatrix { nrows: self.ncols, ncols: self.nrows, row_ptr, col_idx, values }
    }

    /// Sparse product `self * rhs` with a dense accumulator per row.
    pub fn matmul(&self, rhs: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.ncols, rhs.nrows, "matmul shape");
        let mut acc = vec![0.0f64; rhs.ncols];
        let mut seen = vec![false; rhs.ncols];
        let mut active: Vec<usize> = Vec::new();
        let mut out = CooBuilder::new(self.nrows, rhs.ncols);
        for i in 0..self.nrows {
            active.clear();
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                let (rcols, rvals) = rhs.row(*c);
                for (rc, rv) in rcols.iter().zip(rvals) {
                    if !seen[*rc] {
                        seen[*rc] = true;
                        active.push(*rc);
                    }
                    acc[*rc] += v * rv;
                }
            }
            active.sort_unstable();
            for &j in &active {
                out.push(i, j, acc[j]);
                acc[j] = 0.0;
                seen[j] = false;
            }
        }
        out.build()
    }

    pub fn scaled(&self, s: f64) -> CsrMatrix {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= s;
        }
        out
    }

    /// Returns `self + diag(d)`; `d` must have one entry per row.
    pub fn add_diagonal(&self, d: &DVector<f64>) -> CsrMatrix {
        assert_eq!(self.nrows, self.ncols, "add_diagonal requires a square matrix");
        assert_eq!(d.len(), self.nrows, "add_diagonal shape");
        let mut b = CooBuilder::with_capacity(self.nrows, self.ncols, self.nnz() + d.len());
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                b.push(i, *c, *v);
            }
            b.push(i, i, d[i]);
        }
        b.build()
    }

    /// Replaces the matrix with `(A + A') / 2`. Used after Galerkin products
    /// to remove the last-bit asymmetry of floating point evaluation.
    pub fn symmetrized(&self) -> CsrMatrix {
        assert_eq!(self.nrows, self.ncols, "symmetrize requires a square matrix");
        let t = self.transpose();
        let mut b = CooBuilder::with_capacity(self.nrows, self.ncols, 2 * self.nnz());
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                b.push(i, *c, 0.5 * v);
            }
            let (tcols, tvals) = t.row(i);
            for (c, v) in tcols.iter().zip(tvals) {
                b.push(i, *c, 0.5 * v);
            }
        }
        b.build()
    }

    /// Largest absolute deviation from symmetry, `max |a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        if self.nrows != self.ncols {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(*c, i)).abs());
            }
        }
        worst
    }

    /// Symmetry check with a tolerance scaled by the largest entry, so the
    /// same relative accuracy is demanded of stencils with O(1) entries and
    /// of Laplacians scaled by N^2.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.nrows == self.ncols && self.asymmetry() <= tol * self.max_abs().max(1.0)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                m[(i, *c)] = *v;
            }
        }
        m
    }

    /// Converts a dense matrix, dropping exact zeros.
    pub fn from_dense(m: &DMatrix<f64>) -> CsrMatrix {
        let mut b = CooBuilder::new(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                if v != 0.0 {
                    b.push(i, j, v);
                }
            }
        }
        b.build()
    }

    /// Triplet view in row-major order, used by the text serialization.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(c, v)| (i, *c, *v)).collect::<Vec<_>>()
        })
    }
}

/// Sparse Cholesky factorization over the row envelope of a symmetric
/// positive definite matrix. For a matrix with bandwidth `b` the cost is
/// O(n b^2) time and O(n b) memory; fill stays inside the envelope, so no
/// symbolic analysis is needed.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    n: usize,
    /// First stored column of each row of L.
    first: Vec<usize>,
    /// Start of each row's slice in `data`; row i occupies
    /// `data[offsets[i]..offsets[i + 1]]`, columns `first[i]..=i`.
    offsets: Vec<usize>,
    data: Vec<f64>,
}

impl EnvelopeCholesky {
    /// Factors a symmetric positive definite CSR matrix. Fails with
    /// [`Error::NotPositiveDefinite`] when a pivot is not strictly positive
    /// or not finite.
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "Cholesky requires a square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        let n = a.nrows();
        let first: Vec<usize> = (0..n)
            .map(|i| {
                let (cols, _) = a.row(i);
                cols.first().copied().unwrap_or(i).min(i)
            })
            .collect();
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0usize);
        for i in 0..n {
            offsets.push(offsets[i] + (i - first[i] + 1));
        }
        let mut data = vec![0.0f64; offsets[n]];
        // Scatter the lower triangle of A into the envelope.
        for i in 0..n {
            let (cols, vals) = a.row(i);
            for (c, v) in cols.iter().zip(vals) {
                if *c <= i {
                    data[offsets[i] + (c - first[i])] = *v;
                }
            }
        }
        // Left-looking factorization; all accesses stay in the envelope.
        for i in 0..n {
            let fi = first[i];
            for j in fi..=i {
                let fj = first[j];
                let lo = fi.max(fj);
                let mut sum = data[offsets[i] + (j - fi)];
                for k in lo..j {
                    sum -= data[offsets[i] + (k - fi)] * data[offsets[j] + (k - fj)];
                }
                if j < i {
                    data[offsets[i] + (j - fi)] = sum / data[offsets[j] + (j - fj)];
                } else {
                    if !sum.is_finite() || sum <= 0.0 {
                        return Err(Error::NotPositiveDefinite(format!(
                            "pivot {sum:.6e} at row {i} of {n}"
                        )));
                    }
                    data[offsets[i] + (j - fi)] = sum.sqrt();
                }
            }
        }
        Ok(EnvelopeCholesky { n, first, offsets, data })
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` using the stored factor.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        assert_eq!(b.len(), self.n, "solve shape");
        let mut x = b.clone();
        // L y = b
        for i in 0..self.n {
            let fi = self.first[i];
            let row = &self.data[self.offsets[i]..self.offsets[i + 1]];
            let mut sum = x[i];
            for (k, l) in (fi..i).zip(row) {
                sum -= l * x[k];
            }
            x[i] = sum / row[i - fi];
        }
        // L' x = y
        for i in (0..self.n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.offsets[i]..self.offsets[i + 1]];
            x[i] /= row[i - fi];
            let xi = x[i];
            for (k, l) in (fi..i).zip(row) {
                x[k] -= l * xi;
            }
        }
        x
    }
}

/// Extreme eigenvalues `(min, max)` of a dense symmetric matrix.
pub fn dense_sym_extreme_eigs(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = m.clone().symmetric_eigen();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &l in eig.eigenvalues.iter() {
        lo = lo.min(l);
        hi = hi.max(l);
    }
    (lo, hi)
}

/// Spectral norm of a dense (not necessarily symmetric) matrix.
pub fn dense_spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values.max()
}

/// Relative tolerance used by the iterative spectral estimates.
pub const POWER_ITERATION_TOL: f64 = 1e-8;
/// Iteration cap for the iterative spectral estimates.
pub const POWER_ITERATION_MAX: usize = 500;

/// Largest eigenvalue of a symmetric PSD operator given as a matvec closure,
/// by power iteration with a fixed deterministic start. Converges to
/// [`POWER_ITERATION_TOL`] relative accuracy or stops at
/// [`POWER_ITERATION_MAX`] iterations, returning the last Rayleigh quotient.
pub fn power_iteration_largest<F>(n: usize, apply: F) -> f64
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    // Deterministic start with energy in every coordinate.
    let mut v = DVector::from_fn(n, |i, _| 1.0 + ((i % 7) as f64) * 0.125);
    v /= v.norm();
    let mut lambda = 0.0f64;
    for _ in 0..POWER_ITERATION_MAX {
        let w = apply(&v);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w);
        v = w / norm;
        if (next - lambda).abs() <= POWER_ITERATION_TOL * next.abs() {
            return next;
        }
        lambda = next;
    }
    lambda
}

/// Default dimension below which eigenvalue and singular value problems are
/// solved densely; above it the iterative estimates take over.
pub const DENSE_EIG_LIMIT: usize = 2000;

/// Extreme eigenvalues `(min, max)` of a symmetric CSR matrix. Dense solve
/// up to `dense_limit`. Above it: when the matrix factors, power iteration
/// for the top and inverse iteration through the Cholesky factor for the
/// bottom; otherwise shifted power iterations that also handle indefinite
/// matrices. The iterative values are estimates at the power-iteration
/// tolerance, not exact.
pub fn sym_extreme_eigs(a: &CsrMatrix, dense_limit: usize) -> (f64, f64) {
    assert_eq!(a.nrows(), a.ncols(), "extreme eigenvalues of a square matrix");
    if a.nrows() <= dense_limit {
        return dense_sym_extreme_eigs(&a.to_dense());
    }
    let n = a.nrows();
    if let Ok(chol) = EnvelopeCholesky::factor(a) {
        let hi = power_iteration_largest(n, |v| a.matvec(v));
        let lo = 1.0 / power_iteration_largest(n, |v| chol.solve(v));
        (lo, hi)
    } else {
        // max |lambda| from A^2, then resolve each end with a PSD shift.
        let top_abs = power_iteration_largest(n, |v| a.matvec(&a.matvec(v))).sqrt();
        let lo = top_abs - power_iteration_largest(n, |v| v * top_abs - a.matvec(v));
        let hi = power_iteration_largest(n, |v| v * top_abs + a.matvec(v)) - top_abs;
        (lo, hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spd() -> CsrMatrix {
        // 4, -1 tridiagonal: SPD with known structure.
        let n = 6;
        let mut b = CooBuilder::new(n, n);
        for i in 0..n {
            b.push(i, i, 4.0);
            if i + 1 < n {
                b.push(i, i + 1, -1.0);
                b.push(i + 1, i, -1.0);
            }
        }
        b.build()
    }

    #[test]
    fn builder_sums_duplicates_and_sorts() {
        let mut b = CooBuilder::new(2, 3);
        b.push(1, 2, 1.0);
        b.push(0, 1, 2.0);
        b.push(1, 2, 0.5);
        b.push(1, 0, -1.0);
        let m = b.build();
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.get(1, 2), 1.5);
        assert_eq!(m.get(0, 1), 2.0);
        assert_eq!(m.get(1, 0), -1.0);
        assert_eq!(m.get(0, 0), 0.0);
        let (cols, _) = m.row(1);
        assert!(cols.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn matvec_and_transpose_match_dense() {
        let m = small_spd();
        let d = m.to_dense();
        let x = DVector::from_fn(6, |i, _| (i as f64) - 2.5);
        let y = m.matvec(&x);
        let yd = &d * &x;
        assert!((y - yd).norm() < 1e-14);
        let z = m.transpose_matvec(&x);
        let zd = d.transpose() * &x;
        assert!((z - zd).norm() < 1e-14);
        let t = m.transpose();
        assert!((t.to_dense() - d.transpose()).norm() < 1e-14);
    }

    #[test]
    fn matmul_matches_dense_product() {
        let mut b = CooBuilder::new(3, 4);
        b.push(0, 0, 1.0);
        b.push(0, 3, 2.0);
        b.push(1, 1, -1.0);
        b.push(2, 2, 0.5);
        b.push(2, 0, 3.0);
        let p = b.build();
        let a = small_spd();
        let q = p.transpose().matmul(&p);
        let qd = p.to_dense().transpose() * p.to_dense();
        assert!((q.to_dense() - qd).norm() < 1e-14);
        let aa = a.matmul(&a);
        assert!((aa.to_dense() - a.to_dense() * a.to_dense()).norm() < 1e-12);
    }

    #[test]
    fn symmetrize_and_asymmetry() {
        let mut b = CooBuilder::new(2, 2);
        b.push(0, 1, 1.0);
        b.push(1, 0, 1.0 + 3e-13);
        b.push(0, 0, 1.0);
        b.push(1, 1, 1.0);
        let m = b.build();
        assert!(m.asymmetry() > 0.0);
        assert!(m.is_symmetric(1e-12));
        let s = m.symmetrized();
        assert_eq!(s.asymmetry(), 0.0);
        assert!((s.get(0, 1) - (1.0 + 1.5e-13)).abs() < 1e-16);
    }

    #[test]
    fn envelope_cholesky_solves_spd_system() {
        let a = small_spd();
        let chol = EnvelopeCholesky::factor(&a).expect("tridiagonal SPD factors");
        let x_true = DVector::from_fn(6, |i, _| 1.0 + i as f64);
        let b = a.matvec(&x_true);
        let x = chol.solve(&b);
        assert!((x - x_true).norm() < 1e-12);
    }

    #[test]
    fn envelope_cholesky_matches_dense_on_full_matrix() {
        // Dense SPD via Gram matrix; envelope equals the full lower triangle.
        let g = DMatrix::from_fn(5, 5, |i, j| ((i * 5 + j) as f64 * 0.37).sin());
        let a = &g * g.transpose() + DMatrix::identity(5, 5) * 5.0;
        let acsr = CsrMatrix::from_dense(&a);
        let chol = EnvelopeCholesky::factor(&acsr).unwrap();
        let b = DVector::from_fn(5, |i, _| (i as f64) - 2.0);
        let x = chol.solve(&b);
        let xd = a.clone().cholesky().unwrap().solve(&b);
        assert!((x - xd).norm() < 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut b = CooBuilder::new(2, 2);
        b.push(0, 0, 1.0);
        b.push(1, 1, -1.0);
        let m = b.build();
        assert!(matches!(EnvelopeCholesky::factor(&m), Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn extreme_eigs_match_dense_path() {
        let a = small_spd();
        let (lo_d, hi_d) = dense_sym_extreme_eigs(&a.to_dense());
        let (lo_i, hi_i) = sym_extreme_eigs(&a, 0); // force iterative path
        assert!((lo_d - lo_i).abs() < 1e-6 * lo_d.abs(), "{lo_d} vs {lo_i}");
        assert!((hi_d - hi_i).abs() < 1e-6 * hi_d.abs(), "{hi_d} vs {hi_i}");
    }

    #[test]
    fn extreme_eigs_handle_indefinite_iteratively() {
        let mut b = CooBuilder::new(3, 3);
        b.push(0, 0, 2.0);
        b.push(1, 1, -3.0);
        b.push(2, 2, 0.5);
        let m = b.build();
        let (lo, hi) = sym_extreme_eigs(&m, 0);
        assert!((lo + 3.0).abs() < 1e-6);
        assert!((hi - 2.0).abs() < 1e-6);
    }
}
