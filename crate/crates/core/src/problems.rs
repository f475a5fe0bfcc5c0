//! Objective oracles for the model problems and their derivative assembly.
//!
//! Two problem families are provided:
//!
//! * a 1D Poisson quadratic `f(x) = x'Ax/2 - b'x` with
//!   `A = N^2 tridiag(-1, 2, -1)` on `N - 1` interior points and a
//!   three-frequency forcing term, and
//! * a 2D objective on the unit square combining the bilinear finite
//!   element Laplacian (nine-point stencil `1/3 [-1 -1 -1; -1 8 -1; -1 -1 -1]`,
//!   independent of the mesh width) with the separable exponential penalty
//!   `h lambda sum_i (x_i^2 exp(x_i) - exp(x_i))`, where `h = 1/(n + 1)` for
//!   `n` total unknowns, the area element of the square mesh.
//!
//! Interior grid points in 2D are ordered row-major: point `(i, j)` at
//! coordinates `(i s, j s)` maps to index `(i - 1) m + (j - 1)` for
//! `i, j in 1..=m`, `m` interior points per axis, axis spacing
//! `s = 1/(m + 1)`. The transfer operators in [`crate::operators`] use the
//! same ordering.
//!
//! The penalty's diagonal Hessian contribution `h lambda exp(x)(x^2 + 4x + 1)`
//! is negative exactly when a coordinate lies in the open interval
//! `(-2 - sqrt(3), -2 + sqrt(3))`; objectives report that pocket instead of
//! regularizing it away, and the solver surfaces indefiniteness as an error
//! status if a Newton system stops being positive definite.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{sym_extreme_eigs, CooBuilder, CsrMatrix, DENSE_EIG_LIMIT};

/// Twice-differentiable objective with an assembled sparse Hessian.
pub trait ObjectiveOracle: Send + Sync {
    fn dimension(&self) -> usize;
    fn value(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
    fn hessian(&self, x: &DVector<f64>) -> CsrMatrix;

    /// True when the Hessian does not depend on `x` (quadratic objectives);
    /// lets [`estimate_constants`] return exact values with `m = 0`.
    fn hessian_is_constant(&self) -> bool {
        false
    }
}

/// `A = N^2 tridiag(-1, 2, -1)` on the `N - 1` interior points of a 1D grid
/// with `N` cells.
pub fn build_laplacian_1d(n_points: usize) -> Result<CsrMatrix> {
    if n_points < 2 {
        return Err(Error::InvalidArgument(format!("1D Laplacian needs at least 2 cells, got {n_points}")));
    }
    let n = n_points - 1;
    let scale = (n_points * n_points) as f64;
    let mut b = CooBuilder::with_capacity(n, n, 3 * n);
    for i in 0..n {
        b.push(i, i, 2.0 * scale);
        if i + 1 < n {
            b.push(i, i + 1, -scale);
            b.push(i + 1, i, -scale);
        }
    }
    Ok(b.build())
}

/// Bilinear finite element Laplacian on the `(2^level - 1)^2` interior
/// points of the unit square at grid level `level`, nine-point stencil
/// `1/3 [-1 -1 -1; -1 8 -1; -1 -1 -1]`, row-major ordering.
pub fn build_laplacian_2d(level: u32) -> Result<CsrMatrix> {
    if !(2..=14).contains(&level) {
        return Err(Error::InvalidArgument(format!("2D level must be in 2..=14, got {level}")));
    }
    let n_axis = (1usize << level) - 1;
    let n = n_axis * n_axis;
    let mut b = CooBuilder::with_capacity(n, n, 9 * n);
    let idx = |i: i64, j: i64| ((i - 1) as usize) * n_axis + (j - 1) as usize;
    for i in 1..=n_axis as i64 {
        for j in 1..=n_axis as i64 {
            let row = idx(i, j);
            b.push(row, row, 8.0 / 3.0);
            for di in -1..=1i64 {
                for dj in -1..=1i64 {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let (ni, nj) = (i + di, j + dj);
                    if ni >= 1 && ni <= n_axis as i64 && nj >= 1 && nj <= n_axis as i64 {
                        b.push(row, idx(ni, nj), -1.0 / 3.0);
                    }
                }
            }
        }
    }
    Ok(b.build())
}

/// Quadratic objective `f(x) = x'Ax/2 - b'x` with a constant SPD Hessian.
#[derive(Debug, Clone)]
pub struct QuadraticOracle {
    a: CsrMatrix,
    b: DVector<f64>,
}

impl QuadraticOracle {
    pub fn new(a: CsrMatrix, b: DVector<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() || a.nrows() != b.len() {
            return Err(Error::DimensionMismatch(format!(
                "quadratic needs square A matching b, got {}x{} and {}",
                a.nrows(),
                a.ncols(),
                b.len()
            )));
        }
        if !a.is_symmetric(1e-12) {
            return Err(Error::InvalidArgument("quadratic Hessian must be symmetric".into()));
        }
        Ok(QuadraticOracle { a, b })
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.a
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.b
    }
}

impl ObjectiveOracle for QuadraticOracle {
    fn dimension(&self) -> usize {
        self.b.len()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&self.a.matvec(x)) - self.b.dot(x)
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.a.matvec(x) - &self.b
    }

    fn hessian(&self, _x: &DVector<f64>) -> CsrMatrix {
        self.a.clone()
    }

    fn hessian_is_constant(&self) -> bool {
        true
    }
}

/// Forcing term of the 1D Poisson study: three sine frequencies of widely
/// different stiffness.
pub fn poisson_forcing(q: f64) -> f64 {
    use std::f64::consts::PI;
    (4.0 * PI * q).sin() + 8.0 * (32.0 * PI * q).sin() + 16.0 * (64.0 * PI * q).sin()
}

/// 1D Poisson quadratic on `N - 1` interior points with
/// `b_i = w(i/N)` for the three-frequency forcing `w`.
pub fn build_poisson_1d(n_points: usize) -> Result<QuadraticOracle> {
    let a = build_laplacian_1d(n_points)?;
    let n = n_points - 1;
    let b = DVector::from_fn(n, |i, _| poisson_forcing((i + 1) as f64 / n_points as f64));
    QuadraticOracle::new(a, b)
}

/// Coordinates of the penalty pocket: the open interval of `x` values where
/// `exp(x)(x^2 + 4x + 1)` is negative.
pub const POCKET_LO: f64 = -2.0 - 1.7320508075688772;
pub const POCKET_HI: f64 = -2.0 + 1.7320508075688772;

/// 2D objective `f(x) = x'Ax/2 + h lambda sum_i (x_i^2 e^{x_i} - e^{x_i}) - b'x`
/// with the nine-point Laplacian `A` and pointwise right-hand side samples.
#[derive(Debug, Clone)]
pub struct Example1Oracle {
    a: CsrMatrix,
    b: DVector<f64>,
    level: u32,
    lambda: f64,
    h: f64,
}

/// Right-hand side field of the 2D study, evaluated pointwise on the mesh.
pub fn example1_rhs(x1: f64, x2: f64) -> f64 {
    use std::f64::consts::PI;
    let s = x1 * x1 - x1 * x1 * x1;
    (9.0 * PI * PI + (s * (3.0 * PI * x2).sin()).exp() * s + 6.0 * x1 - 2.0) * (3.0 * PI * x1).sin()
}

/// Builds the 2D objective at grid `level` with penalty weight `lambda`.
pub fn build_example1(level: u32, lambda: f64) -> Result<Example1Oracle> {
    let a = build_laplacian_2d(level)?;
    let n_axis = (1usize << level) - 1;
    let spacing = 1.0 / (n_axis as f64 + 1.0);
    let mut b = DVector::zeros(n_axis * n_axis);
    for i in 1..=n_axis {
        for j in 1..=n_axis {
            b[(i - 1) * n_axis + (j - 1)] = example1_rhs(i as f64 * spacing, j as f64 * spacing);
        }
    }
    // Area element: h = 1/(n + 1) over the total unknown count, not the
    // per-axis spacing.
    let h = 1.0 / ((n_axis * n_axis) as f64 + 1.0);
    Ok(Example1Oracle { a, b, level, lambda, h })
}

impl Example1Oracle {
    pub fn stiffness(&self) -> &CsrMatrix {
        &self.a
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Combined weight `h lambda` multiplying the penalty sum.
    pub fn penalty_weight(&self) -> f64 {
        self.h * self.lambda
    }

    /// True when any coordinate sits in the pocket where the penalty's
    /// Hessian contribution is negative.
    pub fn penalty_indefinite_at(&self, x: &DVector<f64>) -> bool {
        x.iter().any(|&t| t > POCKET_LO && t < POCKET_HI)
    }
}

impl ObjectiveOracle for Example1Oracle {
    fn dimension(&self) -> usize {
        self.b.len()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let quad = 0.5 * x.dot(&self.a.matvec(x)) - self.b.dot(x);
        let w = self.h * self.lambda;
        let penalty: f64 = x.iter().map(|&t| (t * t - 1.0) * t.exp()).sum();
        quad + w * penalty
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = self.a.matvec(x) - &self.b;
        let w = self.h * self.lambda;
        for (gi, &t) in g.iter_mut().zip(x.iter()) {
            *gi += w * t.exp() * (t * t + 2.0 * t - 1.0);
        }
        g
    }

    fn hessian(&self, x: &DVector<f64>) -> CsrMatrix {
        let w = self.h * self.lambda;
        let d = DVector::from_fn(x.len(), |i, _| {
            let t = x[i];
            w * t.exp() * (t * t + 4.0 * t + 1.0)
        });
        self.a.add_diagonal(&d)
    }
}

/// Regularity constants of an objective over a sampled region. For
/// quadratics `mu` and `l` are extreme Hessian eigenvalues and `m = 0`
/// exactly; otherwise all three are sample estimates.
#[derive(Debug, Clone)]
pub struct ProblemConstants {
    /// Smallest sampled Hessian eigenvalue (strong convexity constant).
    pub mu: f64,
    /// Largest sampled Hessian eigenvalue (gradient Lipschitz constant).
    pub l: f64,
    /// Hessian Lipschitz estimate, `max |H(x) - H(y)|_2 / |x - y|_2`.
    pub m: f64,
    /// Optional gradient norm bound over the region of interest.
    pub nu: Option<f64>,
    /// Optional iterate radius bound over the region of interest.
    pub zeta: Option<f64>,
    /// Optional fine-step decrease coefficient when the caller has one.
    pub lambda_fine: Option<f64>,
    /// Raised when a sampled Hessian was not positive definite.
    pub nonconvex_detected: bool,
}

impl ProblemConstants {
    pub fn exact_quadratic(mu: f64, l: f64) -> Self {
        ProblemConstants { mu, l, m: 0.0, nu: None, zeta: None, lambda_fine: None, nonconvex_detected: mu <= 0.0 }
    }
}

/// Eigenvalue extremes over `points` plus the Lipschitz ratio
/// `|H(x) - H(y)|_2 / |x - y|` over the listed index pairs.
fn constants_with_pairs<O: ObjectiveOracle + ?Sized>(
    oracle: &O,
    points: &[DVector<f64>],
    pairs: &[(usize, usize)],
) -> Result<ProblemConstants> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("constant estimation needs at least one sample point".into()));
    }
    let hessians: Vec<CsrMatrix> = points.iter().map(|x| oracle.hessian(x)).collect();
    let mut mu = f64::INFINITY;
    let mut l = f64::NEG_INFINITY;
    for h in &hessians {
        let (lo, hi) = sym_extreme_eigs(h, DENSE_EIG_LIMIT);
        mu = mu.min(lo);
        l = l.max(hi);
    }
    let mut m = 0.0f64;
    for &(i, j) in pairs {
        let dx = (&points[i] - &points[j]).norm();
        if dx > 1e-14 {
            let diff = subtract_csr(&hessians[i], &hessians[j]);
            let (dlo, dhi) = sym_extreme_eigs(&diff, DENSE_EIG_LIMIT);
            m = m.max(dlo.abs().max(dhi.abs()) / dx);
        }
    }
    Ok(ProblemConstants {
        mu,
        l,
        m,
        nu: None,
        zeta: None,
        lambda_fine: None,
        nonconvex_detected: mu <= 0.0,
    })
}

/// Estimates `mu`, `l`, `m` from Hessians at the given points: eigenvalue
/// extremes pointwise, the Lipschitz ratio over consecutive pairs. Used by
/// the audits to measure constants along a trace segment.
pub fn constants_at_points<O: ObjectiveOracle + ?Sized>(oracle: &O, points: &[DVector<f64>]) -> Result<ProblemConstants> {
    let pairs: Vec<(usize, usize)> = (1..points.len()).map(|i| (i - 1, i)).collect();
    constants_with_pairs(oracle, points, &pairs)
}

fn subtract_csr(a: &CsrMatrix, b: &CsrMatrix) -> CsrMatrix {
    let mut out = CooBuilder::with_capacity(a.nrows(), a.ncols(), a.nnz() + b.nnz());
    for (i, j, v) in a.triplets() {
        out.push(i, j, v);
    }
    for (i, j, v) in b.triplets() {
        out.push(i, j, -v);
    }
    out.build()
}

/// Estimates regularity constants over the unit box (fixed seed 1). For
/// quadratics the answer is exact and sampling is skipped.
pub fn estimate_constants<O: ObjectiveOracle + ?Sized>(oracle: &O, sample_count: usize) -> Result<ProblemConstants> {
    estimate_constants_seeded(oracle, sample_count, 1)
}

/// Offset between the two members of an aligned curvature probe pair.
const PROBE_OFFSET: f64 = 0.02;
/// Per-coordinate jitter applied to probe points so different seeds sample
/// disjoint sets.
const PROBE_JITTER: f64 = 0.02;

/// [`estimate_constants`] with an explicit sampling seed.
///
/// Nonlinear oracles are probed over the box `[-1, 1]^n` with two point
/// families. Half the budget walks the diagonal ray `t * ones`, lightly
/// jittered: separable terms reach their extreme curvature on that ray, and
/// min/max eigenvalue estimates taken there reproduce across seeds instead
/// of riding the extreme-value noise of an independent cloud. Each ray
/// point carries an aligned partner at offset [`PROBE_OFFSET`] and the
/// Hessian Lipschitz ratio is measured across those pairs. The rest of the
/// budget is an independent uniform cloud (consecutive points paired),
/// which guards against structure the ray cannot see.
pub fn estimate_constants_seeded<O: ObjectiveOracle + ?Sized>(
    oracle: &O,
    sample_count: usize,
    seed: u64,
) -> Result<ProblemConstants> {
    if oracle.hessian_is_constant() {
        let h = oracle.hessian(&DVector::zeros(oracle.dimension()));
        let (mu, l) = sym_extreme_eigs(&h, DENSE_EIG_LIMIT);
        return Ok(ProblemConstants::exact_quadratic(mu, l));
    }
    if sample_count == 0 {
        return Err(Error::InvalidArgument("sample_count must be positive".into()));
    }
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = oracle.dimension();
    let mut points: Vec<DVector<f64>> = Vec::with_capacity(sample_count);
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let ray_pairs = if sample_count >= 4 { sample_count / 4 } else { 0 };
    for j in 0..ray_pairs {
        let span = 2.0 - PROBE_OFFSET;
        let t = if ray_pairs == 1 { -1.0 } else { -1.0 + span * j as f64 / (ray_pairs - 1) as f64 };
        let base = DVector::from_fn(n, |_, _| {
            let z = rng.random::<f64>() * 2.0 - 1.0;
            (t + PROBE_JITTER * z).clamp(-1.0, 1.0 - PROBE_OFFSET)
        });
        let partner = base.add_scalar(PROBE_OFFSET);
        let i0 = points.len();
        points.push(base);
        points.push(partner);
        pairs.push((i0, i0 + 1));
    }
    let first_cloud = points.len();
    while points.len() < sample_count {
        let i = points.len();
        points.push(DVector::from_fn(n, |_, _| rng.random::<f64>() * 2.0 - 1.0));
        if i > first_cloud {
            pairs.push((i - 1, i));
        }
    }
    constants_with_pairs(oracle, &points, &pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dense_sym_extreme_eigs, EnvelopeCholesky};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};

    #[test]
    fn laplacian_1d_n4_entries() {
        let a = build_laplacian_1d(4).unwrap();
        assert_eq!(a.nrows(), 3);
        let d = a.to_dense();
        let expect = DMatrix::from_row_slice(
            3,
            3,
            &[32.0, -16.0, 0.0, -16.0, 32.0, -16.0, 0.0, -16.0, 32.0],
        );
        assert_eq!(d, expect);
    }

    #[test]
    fn laplacian_1d_n4_extreme_eigenvalues() {
        // Closed forms 16(2 -+ sqrt(2)) checked against the dense solver.
        let a = build_laplacian_1d(4).unwrap();
        let (lo, hi) = dense_sym_extreme_eigs(&a.to_dense());
        let s = 2.0f64.sqrt();
        assert!((lo - 16.0 * (2.0 - s)).abs() < 1e-10);
        assert!((hi - 16.0 * (2.0 + s)).abs() < 1e-10);
    }

    #[test]
    fn laplacian_2d_level2_matches_spelled_out_matrix() {
        let a = build_laplacian_2d(2).unwrap();
        assert_eq!(a.nrows(), 9);
        let c = 8.0 / 3.0;
        let o = -1.0 / 3.0;
        #[rustfmt::skip]
        let expect = DMatrix::from_row_slice(9, 9, &[
            c, o, 0.0, o, o, 0.0, 0.0, 0.0, 0.0,
            o, c, o, o, o, o, 0.0, 0.0, 0.0,
            0.0, o, c, 0.0, o, o, 0.0, 0.0, 0.0,
            o, o, 0.0, c, o, 0.0, o, o, 0.0,
            o, o, o, o, c, o, o, o, o,
            0.0, o, o, 0.0, o, c, 0.0, o, o,
            0.0, 0.0, 0.0, o, o, 0.0, c, o, 0.0,
            0.0, 0.0, 0.0, o, o, o, o, c, o,
            0.0, 0.0, 0.0, 0.0, o, o, 0.0, o, c,
        ]);
        assert_eq!(a.to_dense(), expect);
    }

    #[test]
    fn laplacian_2d_row_major_neighbors() {
        let a = build_laplacian_2d(3).unwrap(); // 7x7 interior
        let row = (3 - 1) * 7 + (4 - 1); // point (3, 4)
        let (cols, vals) = a.row(row);
        assert_eq!(cols.len(), 9);
        for (c, v) in cols.iter().zip(vals) {
            if *c == row {
                assert_eq!(*v, 8.0 / 3.0);
            } else {
                assert_eq!(*v, -1.0 / 3.0);
                // All neighbors live in rows 2..=4, columns 3..=5.
                let (i, j) = (c / 7 + 1, c % 7 + 1);
                assert!((2..=4).contains(&i) && (3..=5).contains(&j), "({i},{j})");
            }
        }
        assert!(a.is_symmetric(1e-15));
    }

    #[test]
    fn poisson_forcing_value_at_eighth() {
        // At q = 1/8 the two fast terms vanish and w = sin(pi/2) = 1.
        let oracle = build_poisson_1d(8).unwrap();
        assert!((oracle.rhs()[0] - 1.0).abs() < 1e-12);
        // All three terms present: compare against a direct evaluation.
        let q = 3.0 / 64.0;
        let by_hand = (4.0 * std::f64::consts::PI * q).sin()
            + 8.0 * (32.0 * std::f64::consts::PI * q).sin()
            + 16.0 * (64.0 * std::f64::consts::PI * q).sin();
        let o64 = build_poisson_1d(64).unwrap();
        assert_eq!(o64.rhs()[2], by_hand);
    }

    #[test]
    fn poisson_gradient_vanishes_at_solution() {
        let oracle = build_poisson_1d(64).unwrap();
        let chol = EnvelopeCholesky::factor(oracle.matrix()).unwrap();
        let x_star = chol.solve(oracle.rhs());
        let g = oracle.gradient(&x_star);
        assert!(g.norm() <= 1e-10 * oracle.rhs().norm());
    }

    #[test]
    fn poisson_value_gap_is_energy_norm() {
        let oracle = build_poisson_1d(32).unwrap();
        let chol = EnvelopeCholesky::factor(oracle.matrix()).unwrap();
        let x_star = chol.solve(oracle.rhs());
        let f_star = oracle.value(&x_star);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let x = DVector::from_fn(31, |_, _| rng.random::<f64>() * 4.0 - 2.0);
            let e = &x - &x_star;
            let energy = 0.5 * e.dot(&oracle.matrix().matvec(&e));
            let gap = oracle.value(&x) - f_star;
            assert!((gap - energy).abs() <= 1e-10 * energy.abs().max(1.0));
        }
    }

    #[test]
    fn example1_rhs_center_value() {
        // At (1/2, 1/2): sin(3 pi/2) = -1, so
        // b = -(9 pi^2 + 0.125 exp(-0.125) + 1) which is about -89.94.
        let expected = -(9.0 * std::f64::consts::PI * std::f64::consts::PI
            + 0.125 * (-0.125f64).exp()
            + 1.0);
        assert!((example1_rhs(0.5, 0.5) - expected).abs() < 1e-12);
        assert!((example1_rhs(0.5, 0.5) + 89.9367).abs() < 1e-4);
        // Level 2 grid center (i, j) = (2, 2) sits at (1/2, 1/2), index 4.
        let oracle = build_example1(2, 10.0).unwrap();
        assert!((oracle.rhs()[4] - expected).abs() < 1e-12);
    }

    #[test]
    fn example1_value_and_gradient_at_zero() {
        let oracle = build_example1(2, 10.0).unwrap();
        let n = oracle.dimension();
        let w = oracle.penalty_weight();
        // Nine unknowns at level 2: h = 1/10.
        assert!((w - 1.0).abs() < 1e-14);
        let zero = DVector::zeros(n);
        // Penalty contributes -h lambda per coordinate at x = 0.
        assert!((oracle.value(&zero) - (-(n as f64) * w)).abs() < 1e-12);
        let g = oracle.gradient(&zero);
        for i in 0..n {
            assert!((g[i] - (-w - oracle.rhs()[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn example1_gradient_matches_finite_differences() {
        let oracle = build_example1(2, 10.0).unwrap();
        let n = oracle.dimension();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let x = DVector::from_fn(n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let g = oracle.gradient(&x);
            for i in 0..n {
                let h = 1e-6 * (1.0 + x[i].abs());
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                let fd = (oracle.value(&xp) - oracle.value(&xm)) / (2.0 * h);
                let scale = g[i].abs().max(1.0);
                assert!((fd - g[i]).abs() <= 1e-5 * scale, "coord {i}: {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn example1_hessian_matches_gradient_differences() {
        let oracle = build_example1(2, 10.0).unwrap();
        let n = oracle.dimension();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        for _ in 0..5 {
            let x = DVector::from_fn(n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let hess = oracle.hessian(&x).to_dense();
            for j in 0..n {
                let h = 1e-6 * (1.0 + x[j].abs());
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let col = (oracle.gradient(&xp) - oracle.gradient(&xm)) / (2.0 * h);
                for i in 0..n {
                    let scale = hess[(i, j)].abs().max(1.0);
                    assert!((col[i] - hess[(i, j)]).abs() <= 1e-4 * scale);
                }
            }
        }
    }

    #[test]
    fn example1_pocket_flag_and_diagonal_sign() {
        let oracle = build_example1(2, 10.0).unwrap();
        let n = oracle.dimension();
        let ones = DVector::from_element(n, 1.0);
        assert!(!oracle.penalty_indefinite_at(&ones));
        assert!(!oracle.penalty_indefinite_at(&DVector::zeros(n)));
        let inside = DVector::from_element(n, -1.0);
        assert!(oracle.penalty_indefinite_at(&inside));
        // Outside the pocket the Hessian is A plus a nonnegative diagonal.
        let d = oracle.hessian(&ones);
        for i in 0..n {
            let delta = d.get(i, i) - oracle.stiffness().get(i, i);
            assert!(delta >= 0.0);
        }
        let d_in = oracle.hessian(&inside);
        assert!(d_in.get(0, 0) < oracle.stiffness().get(0, 0));
    }

    #[test]
    fn constants_exact_for_quadratics() {
        let oracle = build_poisson_1d(4).unwrap();
        let c = estimate_constants(&oracle, 5).unwrap();
        let s = 2.0f64.sqrt();
        assert!((c.mu - 16.0 * (2.0 - s)).abs() < 1e-10);
        assert!((c.l - 16.0 * (2.0 + s)).abs() < 1e-10);
        assert_eq!(c.m, 0.0);
        assert!(!c.nonconvex_detected);

        let eye = QuadraticOracle::new(CsrMatrix::identity(6), DVector::zeros(6)).unwrap();
        let ci = estimate_constants(&eye, 1).unwrap();
        assert!((ci.mu - 1.0).abs() < 1e-12 && (ci.l - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constants_stable_across_disjoint_samples() {
        let oracle = build_example1(2, 10.0).unwrap();
        let a = estimate_constants_seeded(&oracle, 50, 1).unwrap();
        let b = estimate_constants_seeded(&oracle, 50, 2).unwrap();
        assert!(a.mu <= a.l);
        for (x, y) in [(a.mu, b.mu), (a.l, b.l), (a.m, b.m)] {
            let rel = (x - y).abs() / x.abs().max(y.abs());
            assert!(rel <= 0.10, "estimate drift {rel:.3} ({x} vs {y})");
        }
    }

    #[test]
    fn constants_flag_indefinite_region() {
        // With a strong enough penalty the pocket's diagonal dip exceeds the
        // smallest stiffness eigenvalue, so the sampled Hessian goes
        // indefinite.
        let oracle = build_example1(2, 100.0).unwrap();
        let n = oracle.dimension();
        let c = constants_at_points(&oracle, &[DVector::from_element(n, -1.0)]).unwrap();
        assert!(c.nonconvex_detected);
        assert!(c.mu < 0.0);
    }
}
