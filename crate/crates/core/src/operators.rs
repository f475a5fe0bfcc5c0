//! Prolongation/restriction pairs between grid levels.
//!
//! A [`TransferPair`] stores the prolongation `P` (fine rows by coarse
//! columns, full column rank) together with the scale `c` tying the
//! restriction to it: `R = P' / c`. Storing `R` implicitly makes the
//! adjoint consistency `P = c R'` hold by construction instead of by test.
//!
//! The cached norms are `omega = max(|P|_2, |R|_2)` and `xi`, the spectral
//! norm of the pseudoinverse `(R P)^{-1} R`. Because the `c` factors cancel
//! in the pseudoinverse, `xi = 1 / sigma_min(P)` regardless of `c`, and for
//! `c >= 1` also `omega = sigma_max(P)`; both are computed from the Gram
//! matrix `P' P`, densely up to [`DENSE_EIG_LIMIT`](crate::linalg::DENSE_EIG_LIMIT)
//! columns and by power iteration above that.
//!
//! The grid builders use the classical interpolation stencils: linear
//! interpolation `1/2 [1 2 1]` with `c = 2` in 1D, and its tensor product
//! (center 1, edges 1/2, corners 1/4) with `c = 4` in 2D. Two-dimensional
//! grids at level `k` have `(2^k - 1)^2` interior points ordered row-major,
//! matching the problem assembly in [`crate::problems`].

use std::io::{BufRead, Write};

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{sym_extreme_eigs, CooBuilder, CsrMatrix, DENSE_EIG_LIMIT};

/// Singular values at or below this threshold count as rank deficiency.
pub const RANK_TOL: f64 = 1e-10;

/// A prolongation/restriction pair between a fine and a coarse level.
/// Immutable after construction and safe to share across threads.
#[derive(Debug, Clone)]
pub struct TransferPair {
    p: CsrMatrix,
    c: f64,
    sigma_max: f64,
    sigma_min: f64,
}

/// Direction argument for [`apply_transfer`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferDirection {
    /// Coarse to fine: `P v`.
    Prolong,
    /// Fine to coarse: `R v = P' v / c`.
    Restrict,
}

/// Consistency report returned by [`validate_pair`].
#[derive(Debug, Clone)]
pub struct PairReport {
    /// Largest entry of `|P - c R'|`; zero up to roundoff by construction.
    pub consistency: f64,
    /// Smallest singular value of `P`.
    pub sigma_min: f64,
    /// Whether `sigma_min` clears [`RANK_TOL`].
    pub full_rank: bool,
    /// The stored restriction scale.
    pub c: f64,
}

impl PairReport {
    pub fn ok(&self) -> bool {
        self.full_rank && self.consistency <= 1e-12
    }
}

impl TransferPair {
    /// Wraps a prolongation matrix with restriction scale `c`, caching the
    /// extreme singular values of `P`. Rank deficiency is tolerated here and
    /// reported by [`validate_pair`] or on first use of [`TransferPair::xi`].
    pub fn from_csr(p: CsrMatrix, c: f64) -> Result<Self> {
        if !c.is_finite() || c <= 0.0 {
            return Err(Error::InvalidArgument(format!("restriction scale c must be positive, got {c}")));
        }
        if p.nrows() < p.ncols() || p.ncols() == 0 {
            return Err(Error::InvalidArgument(format!(
                "prolongation must map a smaller space into a larger one, got {}x{}",
                p.nrows(),
                p.ncols()
            )));
        }
        let gram = p.transpose().matmul(&p);
        let (lo, hi) = sym_extreme_eigs(&gram, DENSE_EIG_LIMIT);
        let sigma_min = lo.max(0.0).sqrt();
        let sigma_max = hi.max(0.0).sqrt();
        Ok(TransferPair { p, c, sigma_max, sigma_min })
    }

    /// Identity pair (`P = R = I`, `c = 1`); turns coarse corrections into
    /// full-space Newton steps.
    pub fn identity(n: usize) -> Self {
        TransferPair { p: CsrMatrix::identity(n), c: 1.0, sigma_max: 1.0, sigma_min: 1.0 }
    }

    pub fn fine_dim(&self) -> usize {
        self.p.nrows()
    }

    pub fn coarse_dim(&self) -> usize {
        self.p.ncols()
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn prolongation(&self) -> &CsrMatrix {
        &self.p
    }

    /// Materializes `R = P' / c` (tests and audits; the solver never needs it).
    pub fn restriction_matrix(&self) -> CsrMatrix {
        self.p.transpose().scaled(1.0 / self.c)
    }

    /// `P v`, coarse to fine.
    pub fn prolong(&self, v: &DVector<f64>) -> DVector<f64> {
        self.p.matvec(v)
    }

    /// `R v = P' v / c`, fine to coarse.
    pub fn restrict(&self, v: &DVector<f64>) -> DVector<f64> {
        self.p.transpose_matvec(v) / self.c
    }

    /// `P' v`, the unscaled adjoint. The coarse-model algebra (Galerkin
    /// solves, decrement identities) is scale-free only in this convention,
    /// so the solver uses it internally; `restrict` is the reported quantity.
    pub fn prolong_adjoint(&self, v: &DVector<f64>) -> DVector<f64> {
        self.p.transpose_matvec(v)
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma_max
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma_min
    }

    /// `max(|P|_2, |R|_2)`.
    pub fn omega(&self) -> f64 {
        self.sigma_max.max(self.sigma_max / self.c)
    }

    /// Spectral norm of the pseudoinverse `(R P)^{-1} R = (P' P)^{-1} P'`.
    /// Fails when `P` is numerically rank deficient.
    pub fn xi(&self) -> Result<f64> {
        if self.sigma_min <= RANK_TOL {
            return Err(Error::RankDeficient(format!(
                "sigma_min(P) = {:.3e} is at or below {RANK_TOL:.0e}",
                self.sigma_min
            )));
        }
        Ok(1.0 / self.sigma_min)
    }

    /// Cached `(omega, xi)`; see [`TransferPair::xi`] for the failure mode.
    pub fn norms(&self) -> Result<(f64, f64)> {
        Ok((self.omega(), self.xi()?))
    }

    /// Writes the pair as a text header plus coordinate triplets of `P`.
    pub fn write_text<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "transfer-pair v1")?;
        writeln!(w, "{} {} {} {}", self.fine_dim(), self.coarse_dim(), self.c, self.p.nnz())?;
        for (i, j, v) in self.p.triplets() {
            writeln!(w, "{i} {j} {v}")?;
        }
        Ok(())
    }

    /// Parses the format written by [`TransferPair::write_text`].
    pub fn read_text<R: BufRead>(r: &mut R) -> Result<Self> {
        let mut lines = r.lines();
        let magic = lines.next().ok_or_else(|| Error::Parse("empty input".into()))??;
        if magic.trim() != "transfer-pair v1" {
            return Err(Error::Parse(format!("unexpected header {magic:?}")));
        }
        let header = lines.next().ok_or_else(|| Error::Parse("missing dimension line".into()))??;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::Parse(format!("dimension line needs 4 fields, got {}", fields.len())));
        }
        let rows: usize = fields[0].parse().map_err(|e| Error::Parse(format!("rows: {e}")))?;
        let cols: usize = fields[1].parse().map_err(|e| Error::Parse(format!("cols: {e}")))?;
        let c: f64 = fields[2].parse().map_err(|e| Error::Parse(format!("c: {e}")))?;
        let nnz: usize = fields[3].parse().map_err(|e| Error::Parse(format!("nnz: {e}")))?;
        let mut b = CooBuilder::with_capacity(rows, cols, nnz);
        for _ in 0..nnz {
            let line = lines.next().ok_or_else(|| Error::Parse("truncated triplet list".into()))??;
            let t: Vec<&str> = line.split_whitespace().collect();
            if t.len() != 3 {
                return Err(Error::Parse(format!("triplet needs 3 fields, got {t:?}")));
            }
            let i: usize = t[0].parse().map_err(|e| Error::Parse(format!("row index: {e}")))?;
            let j: usize = t[1].parse().map_err(|e| Error::Parse(format!("col index: {e}")))?;
            let v: f64 = t[2].parse().map_err(|e| Error::Parse(format!("value: {e}")))?;
            if i >= rows || j >= cols {
                return Err(Error::Parse(format!("triplet ({i}, {j}) outside {rows}x{cols}")));
            }
            b.push(i, j, v);
        }
        TransferPair::from_csr(b.build(), c)
    }
}

/// Linear interpolation pair for a 1D grid with `n_points` cells: fine
/// dimension `n_points - 1`, coarse dimension `n_points / 2 - 1`, stencil
/// `1/2 [1 2 1]` per coarse column, `c = 2`.
pub fn build_interp_1d(n_points: usize) -> Result<TransferPair> {
    if n_points < 4 || !n_points.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "1D interpolation needs an even point count of at least 4, got {n_points}"
        )));
    }
    let fine = n_points - 1;
    let coarse = n_points / 2 - 1;
    let mut b = CooBuilder::with_capacity(fine, coarse, 3 * coarse);
    for j in 1..=coarse {
        // Coarse point j sits at fine index 2j (1-based).
        b.push(2 * j - 2, j - 1, 0.5);
        b.push(2 * j - 1, j - 1, 1.0);
        b.push(2 * j, j - 1, 0.5);
    }
    TransferPair::from_csr(b.build(), 2.0)
}

/// Bilinear interpolation pair from 2D grid level `level` (coarse,
/// `(2^level - 1)^2` interior points) to level `level + 1`. Tensor-product
/// stencil with center 1, edge 1/2, corner 1/4 weights; `c = 4`. Interior
/// points are ordered row-major.
pub fn build_interp_2d(level: u32) -> Result<TransferPair> {
    if !(1..=14).contains(&level) {
        return Err(Error::InvalidArgument(format!("2D level must be in 1..=14, got {level}")));
    }
    let n_axis = (1usize << level) - 1;
    let m_axis = (1usize << (level + 1)) - 1;
    let coarse = n_axis * n_axis;
    let fine = m_axis * m_axis;
    let mut b = CooBuilder::with_capacity(fine, coarse, 9 * coarse);
    let weight = |d: i64| if d == 0 { 1.0 } else { 0.5 };
    for ci in 1..=n_axis as i64 {
        for cj in 1..=n_axis as i64 {
            let col = (ci as usize - 1) * n_axis + (cj as usize - 1);
            for di in -1..=1i64 {
                for dj in -1..=1i64 {
                    let (fi, fj) = (2 * ci + di, 2 * cj + dj);
                    // Coarse interior centers at (2ci, 2cj) keep the whole
                    // stencil inside the fine interior.
                    let row = (fi as usize - 1) * m_axis + (fj as usize - 1);
                    b.push(row, col, weight(di) * weight(dj));
                }
            }
        }
    }
    TransferPair::from_csr(b.build(), 4.0)
}

/// Composed 2D pair from `coarse_level` to `fine_level` (a chain of
/// [`build_interp_2d`] pairs).
pub fn build_interp_2d_between(coarse_level: u32, fine_level: u32) -> Result<TransferPair> {
    if coarse_level < 1 || coarse_level >= fine_level {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= coarse_level < fine_level, got {coarse_level} and {fine_level}"
        )));
    }
    let mut pair = build_interp_2d(coarse_level)?;
    for level in coarse_level + 1..fine_level {
        pair = compose_transfers(&build_interp_2d(level)?, &pair)?;
    }
    Ok(pair)
}

/// Composes two pairs into a single pair spanning both level gaps: the
/// result prolongs through `inner` then `outer`, `P = P_outer P_inner`,
/// `c = c_outer c_inner`. The inner fine dimension must equal the outer
/// coarse dimension.
pub fn compose_transfers(outer: &TransferPair, inner: &TransferPair) -> Result<TransferPair> {
    if inner.fine_dim() != outer.coarse_dim() {
        return Err(Error::DimensionMismatch(format!(
            "inner pair reaches dimension {}, outer pair starts from {}",
            inner.fine_dim(),
            outer.coarse_dim()
        )));
    }
    TransferPair::from_csr(outer.p.matmul(&inner.p), outer.c * inner.c)
}

/// Applies the pair in the given direction with dimension checking.
pub fn apply_transfer(pair: &TransferPair, v: &DVector<f64>, direction: TransferDirection) -> Result<DVector<f64>> {
    match direction {
        TransferDirection::Prolong => {
            if v.len() != pair.coarse_dim() {
                return Err(Error::DimensionMismatch(format!(
                    "prolongation expects {} entries, got {}",
                    pair.coarse_dim(),
                    v.len()
                )));
            }
            Ok(pair.prolong(v))
        }
        TransferDirection::Restrict => {
            if v.len() != pair.fine_dim() {
                return Err(Error::DimensionMismatch(format!(
                    "restriction expects {} entries, got {}",
                    pair.fine_dim(),
                    v.len()
                )));
            }
            Ok(pair.restrict(v))
        }
    }
}

/// Cached norms of the pair; fails on numerical rank deficiency of `R P`.
pub fn operator_norms(pair: &TransferPair) -> Result<(f64, f64)> {
    pair.norms()
}

/// Measures adjoint consistency and column rank of the pair.
pub fn validate_pair(pair: &TransferPair) -> PairReport {
    let r_t = pair.restriction_matrix().transpose().scaled(pair.c());
    let mut consistency = 0.0f64;
    for (i, j, v) in pair.prolongation().triplets() {
        consistency = consistency.max((v - r_t.get(i, j)).abs());
    }
    for (i, j, v) in r_t.triplets() {
        consistency = consistency.max((v - pair.prolongation().get(i, j)).abs());
    }
    PairReport {
        consistency,
        sigma_min: pair.sigma_min(),
        full_rank: pair.sigma_min() > RANK_TOL,
        c: pair.c(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn dense(p: &CsrMatrix) -> DMatrix<f64> {
        p.to_dense()
    }

    #[test]
    fn interp_1d_n4_matches_stencil() {
        let pair = build_interp_1d(4).unwrap();
        assert_eq!(pair.fine_dim(), 3);
        assert_eq!(pair.coarse_dim(), 1);
        let p = dense(pair.prolongation());
        assert_eq!((p[(0, 0)], p[(1, 0)], p[(2, 0)]), (0.5, 1.0, 0.5));
        let r = dense(&pair.restriction_matrix());
        assert_eq!((r[(0, 0)], r[(0, 1)], r[(0, 2)]), (0.25, 0.5, 0.25));
    }

    #[test]
    fn interp_1d_column_sums_equal_c() {
        for n in [4usize, 8, 16, 64] {
            let pair = build_interp_1d(n).unwrap();
            let p = dense(pair.prolongation());
            for j in 0..pair.coarse_dim() {
                let sum: f64 = p.column(j).iter().sum();
                assert!((sum - pair.c()).abs() < 1e-14, "column {j} of N={n} sums to {sum}");
            }
        }
    }

    #[test]
    fn norms_1d_n4_closed_forms() {
        let pair = build_interp_1d(4).unwrap();
        let (omega, xi) = pair.norms().unwrap();
        // P is the single column (1/2, 1, 1/2): |P| = sqrt(6)/2 and
        // xi = 1/sigma_min = sqrt(6)/3.
        assert!((omega - 6.0f64.sqrt() / 2.0).abs() < 1e-12);
        assert!((xi - 6.0f64.sqrt() / 3.0).abs() < 1e-12);
    }

    #[test]
    fn norms_match_dense_svd_oracle() {
        for n in [8usize, 16, 32] {
            let pair = build_interp_1d(n).unwrap();
            let svd = dense(pair.prolongation()).svd(false, false);
            let smax = svd.singular_values.max();
            let smin = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!((pair.sigma_max() - smax).abs() < 1e-12 * smax);
            assert!((pair.sigma_min() - smin).abs() < 1e-12 * smax);
            // The pseudoinverse norm identity: xi * sigma_min = 1.
            assert!((pair.xi().unwrap() * smin - 1.0).abs() < 1e-10);
        }
        let pair = build_interp_2d(2).unwrap();
        let svd = dense(pair.prolongation()).svd(false, false);
        assert!((pair.sigma_max() - svd.singular_values.max()).abs() < 1e-12 * pair.sigma_max());
    }

    #[test]
    fn pseudoinverse_norm_matches_direct_computation() {
        // xi as the spectral norm of (R P)^{-1} R, computed densely.
        let pair = build_interp_1d(8).unwrap();
        let p = dense(pair.prolongation());
        let r = dense(&pair.restriction_matrix());
        let rp = &r * &p;
        let pinv = rp.try_inverse().unwrap() * r;
        let direct = pinv.svd(false, false).singular_values.max();
        assert!((pair.xi().unwrap() - direct).abs() < 1e-12 * direct);
    }

    #[test]
    fn interp_2d_level1_is_nine_point_column() {
        let pair = build_interp_2d(1).unwrap();
        assert_eq!(pair.fine_dim(), 9);
        assert_eq!(pair.coarse_dim(), 1);
        let p = dense(pair.prolongation());
        let expected = [0.25, 0.5, 0.25, 0.5, 1.0, 0.5, 0.25, 0.5, 0.25];
        for (i, e) in expected.iter().enumerate() {
            assert_eq!(p[(i, 0)], *e, "row {i}");
        }
        assert_eq!(pair.c(), 4.0);
    }

    #[test]
    fn interp_2d_level2_row_major_indexing() {
        // Coarse point (ci, cj) = (1, 2) on the 3x3 coarse grid maps to fine
        // center (2, 4) on the 7x7 fine grid: row-major entries check the
        // frozen ordering convention.
        let pair = build_interp_2d(2).unwrap();
        let p = pair.prolongation();
        let (ci, cj) = (0, 1); // coarse (1,2), zero-based
        let col = ci * 3 + cj;
        let (fi, fj) = (1, 3); // fine center (2,4), zero-based
        let center_row = fi * 7 + fj;
        assert_eq!(p.get(center_row, col), 1.0);
        assert_eq!(p.get(center_row + 1, col), 0.5); // (2,5) edge
        assert_eq!(p.get(center_row + 7, col), 0.5); // (3,4) edge
        assert_eq!(p.get(center_row + 8, col), 0.25); // (3,5) corner
    }

    #[test]
    fn compose_matches_dense_product_oracle() {
        let outer = build_interp_1d(16).unwrap(); // 15 <- 7
        let inner = build_interp_1d(8).unwrap(); // 7 <- 3
        let both = compose_transfers(&outer, &inner).unwrap();
        assert_eq!(both.fine_dim(), 15);
        assert_eq!(both.coarse_dim(), 3);
        assert_eq!(both.c(), 4.0);
        let expect = dense(outer.prolongation()) * dense(inner.prolongation());
        assert!((dense(both.prolongation()) - expect).norm() < 1e-14);
    }

    #[test]
    fn compose_2d_between_levels() {
        let pair = build_interp_2d_between(2, 4).unwrap();
        assert_eq!(pair.coarse_dim(), 9);
        assert_eq!(pair.fine_dim(), 225);
        assert_eq!(pair.c(), 16.0);
        let direct =
            compose_transfers(&build_interp_2d(3).unwrap(), &build_interp_2d(2).unwrap()).unwrap();
        assert!((dense(pair.prolongation()) - dense(direct.prolongation())).norm() < 1e-14);
    }

    #[test]
    fn apply_matches_dense_matvec_oracle() {
        let pair = build_interp_1d(32).unwrap();
        let p = dense(pair.prolongation());
        let v = DVector::from_fn(pair.coarse_dim(), |i, _| ((i * 13 % 7) as f64) - 3.0);
        let up = apply_transfer(&pair, &v, TransferDirection::Prolong).unwrap();
        assert!((up.clone() - &p * &v).norm() < 1e-13 * up.norm().max(1.0));
        let w = DVector::from_fn(pair.fine_dim(), |i, _| ((i * 7 % 11) as f64) - 5.0);
        let down = apply_transfer(&pair, &w, TransferDirection::Restrict).unwrap();
        let rd = p.transpose() * &w / pair.c();
        assert!((down - rd).norm() < 1e-13);
    }

    #[test]
    fn adjoint_consistency_holds_for_all_builders() {
        for pair in [
            build_interp_1d(4).unwrap(),
            build_interp_1d(64).unwrap(),
            build_interp_2d(1).unwrap(),
            build_interp_2d(3).unwrap(),
            build_interp_2d_between(1, 3).unwrap(),
        ] {
            let report = validate_pair(&pair);
            assert!(report.ok(), "{report:?}");
            assert!(report.consistency <= 1e-12);
        }
    }

    #[test]
    fn validate_flags_zero_column() {
        // Zero out one coarse column of an otherwise valid prolongation.
        let good = build_interp_1d(8).unwrap();
        let mut b = CooBuilder::new(7, 3);
        for (i, j, v) in good.prolongation().triplets() {
            if j != 1 {
                b.push(i, j, v);
            }
        }
        let broken = TransferPair::from_csr(b.build(), 2.0).unwrap();
        let report = validate_pair(&broken);
        assert!(!report.full_rank);
        assert!(!report.ok());
        assert!(matches!(broken.xi(), Err(Error::RankDeficient(_))));
        assert!(matches!(broken.norms(), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn builder_argument_errors() {
        assert!(matches!(build_interp_1d(5), Err(Error::InvalidArgument(_))));
        assert!(matches!(build_interp_1d(2), Err(Error::InvalidArgument(_))));
        assert!(matches!(build_interp_2d(0), Err(Error::InvalidArgument(_))));
        assert!(matches!(build_interp_2d_between(3, 3), Err(Error::InvalidArgument(_))));
        let a = build_interp_1d(8).unwrap();
        let b = build_interp_1d(8).unwrap();
        assert!(matches!(compose_transfers(&a, &b), Err(Error::DimensionMismatch(_))));
        let v = DVector::zeros(5);
        assert!(matches!(
            apply_transfer(&a, &v, TransferDirection::Prolong),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn norms_are_scale_convention_invariant() {
        let p = build_interp_1d(16).unwrap().prolongation().clone();
        let with_scale = TransferPair::from_csr(p.clone(), 2.0).unwrap();
        let unit_scale = TransferPair::from_csr(p, 1.0).unwrap();
        assert!((with_scale.xi().unwrap() - unit_scale.xi().unwrap()).abs() < 1e-13);
        assert!((with_scale.omega() - unit_scale.omega()).abs() < 1e-13);
    }

    #[test]
    fn identity_pair_norms() {
        let pair = TransferPair::identity(12);
        let (omega, xi) = pair.norms().unwrap();
        assert_eq!(omega, 1.0);
        assert_eq!(xi, 1.0);
    }

    #[test]
    fn text_roundtrip_preserves_pair() {
        let pair = build_interp_2d(2).unwrap();
        let mut buf = Vec::new();
        pair.write_text(&mut buf).unwrap();
        let parsed = TransferPair::read_text(&mut buf.as_slice()).unwrap();
        assert_eq!(parsed.fine_dim(), pair.fine_dim());
        assert_eq!(parsed.coarse_dim(), pair.coarse_dim());
        assert_eq!(parsed.c(), pair.c());
        assert!((dense(parsed.prolongation()) - dense(pair.prolongation())).norm() == 0.0);
    }

    #[test]
    fn read_text_rejects_malformed_input() {
        let cases: [&[u8]; 3] = [
            b"not-a-pair\n1 1 1 0\n",
            b"transfer-pair v1\n3 1 2.0\n",
            b"transfer-pair v1\n3 1 2.0 1\n5 0 1.0\n",
        ];
        for case in cases {
            assert!(TransferPair::read_text(&mut &case[..]).is_err());
        }
    }
}
