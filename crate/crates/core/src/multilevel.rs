//! The multilevel Newton-type solver.
//!
//! Each iteration tests the restricted gradient against the scheduled
//! transfer operator: when `|Rg| > kappa |g|` and `|Rg| > epsilon` (both
//! strict) the iterate moves along the coarse correction direction
//! `-P (P'HP)^{-1} P'g`; otherwise it takes a fine variable-metric step
//! `-Q^{-1}g`. Either direction is globalized by Armijo backtracking. The
//! loop stops when `|g| <= eps_stop` or at the iteration cap.
//!
//! Scaling convention: step selection and recorded restricted norms use the
//! pair's stored restriction `R = P'/c`. The coarse solve and the decrement
//! `chi` are computed in the adjoint-consistent scaling (`P'` in place of
//! `R`), under which the direction is unchanged and `g'd = -chi^2`,
//! `d'Hd = chi^2` hold exactly for every restriction scaling.

use std::fmt;
use std::io::{self, Write};

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, EnvelopeCholesky};
use crate::linsolve::InnerSolver;
use crate::operators::TransferPair;
use crate::problems::ObjectiveOracle;

/// Backtracking attempts before the line search gives up.
pub const MAX_BACKTRACKS: usize = 60;
/// Armijo comparisons closer than this many ulps of the incumbent objective
/// are numerically undecidable and resolved in favor of the step.
const ARMIJO_RESOLUTION_ULPS: f64 = 1024.0;
/// Standard deviation of the seeded Gaussian initializer.
pub const INIT_SIGMA: f64 = 5.0;

/// Which correction produced a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Coarse,
    Fine,
}

impl fmt::Display for StepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepKind::Coarse => write!(f, "coarse"),
            StepKind::Fine => write!(f, "fine"),
        }
    }
}

/// Metric of the fine correction step `d = -Q^{-1} g`.
#[derive(Debug, Clone)]
pub enum FineVariant {
    /// `Q = H(x)`: damped Newton.
    Newton,
    /// `Q = I`: steepest descent.
    SteepestDescent,
    /// Fixed SPD metric supplied by the caller.
    CustomMetric(CsrMatrix),
}

/// How the next transfer operator is picked when several are registered.
#[derive(Debug, Clone)]
pub enum ScheduleKind {
    /// Always the first operator.
    Single,
    /// Round robin over all operators.
    Cyclical,
    /// Seeded draw from a strictly positive mass function (must sum to 1).
    Probabilistic(Vec<f64>),
}

/// Stateful operator scheduler. Indices are zero-based.
#[derive(Debug, Clone)]
pub struct OperatorSchedule {
    kind: ScheduleKind,
    count: usize,
    cursor: usize,
}

impl OperatorSchedule {
    pub fn new(kind: ScheduleKind, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidConfig("schedule needs at least one operator".into()));
        }
        if let ScheduleKind::Probabilistic(masses) = &kind {
            if masses.len() != count {
                return Err(Error::InvalidConfig(format!(
                    "{} masses for {count} operators",
                    masses.len()
                )));
            }
            if masses.iter().any(|&m| m.is_nan() || m <= 0.0) {
                return Err(Error::InvalidConfig("operator masses must be strictly positive".into()));
            }
            let total: f64 = masses.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidConfig(format!("operator masses sum to {total}, expected 1")));
            }
        }
        Ok(OperatorSchedule { kind, count, cursor: 0 })
    }

    pub fn next<R: rand::Rng>(&mut self, rng: &mut R) -> usize {
        match &self.kind {
            ScheduleKind::Single => 0,
            ScheduleKind::Cyclical => {
                let i = self.cursor;
                self.cursor = (self.cursor + 1) % self.count;
                i
            }
            ScheduleKind::Probabilistic(masses) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (i, &m) in masses.iter().enumerate() {
                    acc += m;
                    if u < acc {
                        return i;
                    }
                }
                self.count - 1
            }
        }
    }
}

/// Solver controls. `kappa` must stay below `min(1, |R|)` for coarse steps
/// to ever fire; values at or above `|R|` are legal and degrade to a pure
/// variable-metric method.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub kappa: f64,
    pub epsilon: f64,
    pub rho1: f64,
    pub beta_ls: f64,
    pub eps_stop: f64,
    pub max_iter: usize,
    pub fine_variant: FineVariant,
    /// Solver for fine Newton systems; coarse systems are always direct.
    pub inner_solver: InnerSolver,
    pub schedule: ScheduleKind,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            kappa: 0.5,
            epsilon: 0.1,
            rho1: 0.01,
            beta_ls: 0.5,
            eps_stop: 1e-9,
            max_iter: 10_000,
            fine_variant: FineVariant::Newton,
            inner_solver: InnerSolver::Direct,
            schedule: ScheduleKind::Single,
            seed: 0,
        }
    }
}

impl SolverConfig {
    /// Defaults with `kappa` set to the dimension ratio of the pair.
    pub fn for_pair(pair: &TransferPair) -> Self {
        SolverConfig { kappa: pair.coarse_dim() as f64 / pair.fine_dim() as f64, ..SolverConfig::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let range = |name: &str, v: f64, lo: f64, hi: f64| -> Result<()> {
            if v > lo && v < hi {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} = {v} outside ({lo}, {hi})")))
            }
        };
        range("kappa", self.kappa, 0.0, 1.0)?;
        // An absolute gradient threshold, so any positive finite value is
        // meaningful; the problem scale is the caller's business.
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "epsilon = {} must be positive and finite",
                self.epsilon
            )));
        }
        range("rho1", self.rho1, 0.0, 0.5)?;
        range("beta_ls", self.beta_ls, 0.0, 1.0)?;
        if !(self.eps_stop > 0.0 && self.eps_stop.is_finite()) {
            return Err(Error::InvalidConfig(format!("eps_stop = {} must be positive", self.eps_stop)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be positive".into()));
        }
        if let ScheduleKind::Probabilistic(masses) = &self.schedule {
            OperatorSchedule::new(ScheduleKind::Probabilistic(masses.clone()), masses.len())?;
        }
        Ok(())
    }
}

/// State recorded after iteration `k` accepted its step: `f`, `grad_norm`
/// and `restricted_grad_norm` describe the updated iterate (the restricted
/// norm is taken through the operator used at this step).
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub k: usize,
    pub step_kind: StepKind,
    pub alpha: f64,
    pub f: f64,
    pub grad_norm: f64,
    pub restricted_grad_norm: f64,
    pub chi: Option<f64>,
    pub operator_index: Option<usize>,
}

/// Terminal state of a solve.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    IterationLimit,
    Error { message: String },
}

impl SolveStatus {
    pub fn is_converged(&self) -> bool {
        matches!(self, SolveStatus::Converged)
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveStatus::Converged => write!(f, "converged"),
            SolveStatus::IterationLimit => write!(f, "iteration_limit"),
            SolveStatus::Error { message } => write!(f, "error: {message}"),
        }
    }
}

/// Full account of a solve. A run that starts at a stationary point
/// converges with zero records; when converged, the last record's
/// `grad_norm` is at or below `eps_stop`.
#[derive(Debug, Clone)]
pub struct Trace {
    pub initial_f: f64,
    pub initial_grad_norm: f64,
    pub records: Vec<IterationRecord>,
    pub final_x: DVector<f64>,
    pub status: SolveStatus,
    /// Two-grid cycles accumulated by fine Newton solves.
    pub mg_cycles: usize,
}

impl Trace {
    pub fn final_f(&self) -> f64 {
        self.records.last().map_or(self.initial_f, |r| r.f)
    }

    pub fn final_grad_norm(&self) -> f64 {
        self.records.last().map_or(self.initial_grad_norm, |r| r.grad_norm)
    }

    pub fn coarse_steps(&self) -> usize {
        self.records.iter().filter(|r| r.step_kind == StepKind::Coarse).count()
    }

    pub fn fine_steps(&self) -> usize {
        self.records.iter().filter(|r| r.step_kind == StepKind::Fine).count()
    }

    /// Objective values `f_0, f_1, ..., f_K` including the starting point.
    pub fn f_values(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.records.len() + 1);
        v.push(self.initial_f);
        v.extend(self.records.iter().map(|r| r.f));
        v
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "k,step_kind,alpha,f,grad_norm,restricted_grad_norm,chi,operator_index")?;
        for r in &self.records {
            let chi = r.chi.map_or(String::new(), |c| format!("{c}"));
            let op = r.operator_index.map_or(String::new(), |i| format!("{i}"));
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.k, r.step_kind, r.alpha, r.f, r.grad_norm, r.restricted_grad_norm, chi, op
            )?;
        }
        Ok(())
    }

    pub fn csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv is ascii")
    }
}

/// Step notification passed to the observer of [`nemo_solve_with`].
#[derive(Debug)]
pub struct StepEvent<'a> {
    pub k: usize,
    pub kind: StepKind,
    pub alpha: f64,
    pub chi: Option<f64>,
    pub operator_index: Option<usize>,
    pub mg_cycles: usize,
    pub x_before: &'a DVector<f64>,
    pub x_after: &'a DVector<f64>,
    pub grad_before: &'a DVector<f64>,
    pub grad_after: &'a DVector<f64>,
}

/// Seeded Gaussian starting point with standard deviation [`INIT_SIGMA`]
/// (stream 0 of the run's generator).
pub fn gaussian_init(n: usize, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    DVector::from_fn(n, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        INIT_SIGMA * z
    })
}

/// Galerkin product `P'HP` symmetrized; rejects an asymmetric result, which
/// signals an asymmetric `H`.
fn galerkin_folded(h: &CsrMatrix, pair: &TransferPair) -> Result<CsrMatrix> {
    if h.nrows() != h.ncols() || h.nrows() != pair.fine_dim() {
        return Err(Error::DimensionMismatch(format!(
            "Hessian {}x{} does not act on pair fine dimension {}",
            h.nrows(),
            h.ncols(),
            pair.fine_dim()
        )));
    }
    let p = pair.prolongation();
    let product = p.transpose().matmul(&h.matmul(p));
    let scale = product.max_abs().max(1e-300);
    if product.asymmetry() > 1e-12 * scale {
        return Err(Error::InvalidArgument(
            "coarse Hessian came out asymmetric; fine Hessian is not symmetric".into(),
        ));
    }
    Ok(product.symmetrized())
}

/// Coarse curvature matrix `RHP` (stored restriction scaling), symmetrized
/// and certified positive definite.
pub fn galerkin_coarse_hessian(h: &CsrMatrix, pair: &TransferPair) -> Result<CsrMatrix> {
    let folded = galerkin_folded(h, pair)?;
    // Positive definiteness is scale invariant; certify on the folded form.
    EnvelopeCholesky::factor(&folded)?;
    Ok(folded.scaled(1.0 / pair.c()))
}

/// Coarse correction direction and decrement: `d = -P (P'HP)^{-1} P'g`,
/// `chi = (g'P (P'HP)^{-1} P'g)^{1/2}`. Postconditions `g'd = -chi^2` and
/// `d'Hd = chi^2` hold for every restriction scaling.
pub fn coarse_correction_step(
    gradient: &DVector<f64>,
    h: &CsrMatrix,
    pair: &TransferPair,
    solver: &InnerSolver,
) -> Result<(DVector<f64>, f64)> {
    if gradient.len() != pair.fine_dim() {
        return Err(Error::DimensionMismatch(format!(
            "gradient length {} does not match pair fine dimension {}",
            gradient.len(),
            pair.fine_dim()
        )));
    }
    let q = galerkin_folded(h, pair)?;
    let rg = pair.prolong_adjoint(gradient);
    let (y, _) = solver.solve_spd(&q, &rg)?;
    let chi = rg.dot(&y).max(0.0).sqrt();
    Ok((-pair.prolong(&y), chi))
}

/// Fine correction direction `d = -Q^{-1} g` for the chosen metric. Newton
/// requires the current Hessian; the returned count is the number of
/// two-grid cycles the solve consumed.
pub fn fine_correction_step(
    gradient: &DVector<f64>,
    variant: &FineVariant,
    hessian: Option<&CsrMatrix>,
    solver: &InnerSolver,
) -> Result<(DVector<f64>, usize)> {
    match variant {
        FineVariant::SteepestDescent => Ok((-gradient, 0)),
        FineVariant::Newton => {
            let h = hessian.ok_or_else(|| {
                Error::InvalidArgument("Newton fine step needs the current Hessian".into())
            })?;
            let (y, cycles) = solver.solve_spd(h, gradient)?;
            Ok((-y, cycles))
        }
        FineVariant::CustomMetric(q) => {
            let (y, cycles) = solver.solve_spd(q, gradient)?;
            Ok((-y, cycles))
        }
    }
}

/// Step selection: coarse iff `|Rg| > kappa |g|` and `|Rg| > epsilon`,
/// both strict, in the pair's stored restriction scaling.
pub fn select_step(gradient: &DVector<f64>, pair: &TransferPair, config: &SolverConfig) -> StepKind {
    let rnorm = pair.restrict(gradient).norm();
    if rnorm > config.kappa * gradient.norm() && rnorm > config.epsilon {
        StepKind::Coarse
    } else {
        StepKind::Fine
    }
}

/// Backtracking line search returning `(alpha, f_new, x_new)`. `f_x` and
/// `gtd` are the objective and directional derivative at `x`.
fn armijo_search<O: ObjectiveOracle + ?Sized>(
    oracle: &O,
    x: &DVector<f64>,
    f_x: f64,
    gtd: f64,
    d: &DVector<f64>,
    beta_ls: f64,
    rho1: f64,
) -> Result<(f64, f64, DVector<f64>)> {
    if gtd.is_nan() || gtd >= 0.0 {
        return Err(Error::NotDescent(gtd));
    }
    let mut alpha = 1.0;
    for _ in 0..=MAX_BACKTRACKS {
        let candidate = x + &(d * alpha);
        let f_candidate = oracle.value(&candidate);
        if f_candidate <= f_x + rho1 * alpha * gtd {
            return Ok((alpha, f_candidate, candidate));
        }
        // Near a minimizer the demanded decrease can drop below the
        // resolution of the objective evaluation itself; there the test
        // above compares rounding noise and would otherwise reject steps
        // the exact-arithmetic rule accepts, stalling the iteration with
        // sub-ulp alphas. Treat such ties as accepted: the step must still
        // not increase f by more than the evaluation resolution.
        let resolution = ARMIJO_RESOLUTION_ULPS * f64::EPSILON * f_x.abs().max(1.0);
        if (rho1 * alpha * gtd).abs() <= resolution && f_candidate <= f_x + resolution {
            return Ok((alpha, f_candidate, candidate));
        }
        alpha *= beta_ls;
    }
    Err(Error::LineSearchFailed(format!(
        "no Armijo step after {MAX_BACKTRACKS} backtracks (f = {f_x}, g'd = {gtd})"
    )))
}

/// Largest `alpha` in `{1, beta_ls, beta_ls^2, ...}` with
/// `f(x + alpha d) <= f(x) + rho1 alpha g'd`, where comparisons finer than
/// the floating-point resolution of `f(x)` count as satisfied. Errors on a
/// non-descent direction or after [`MAX_BACKTRACKS`] rejections.
pub fn armijo_backtrack<O: ObjectiveOracle + ?Sized>(
    oracle: &O,
    x: &DVector<f64>,
    d: &DVector<f64>,
    config: &SolverConfig,
) -> Result<f64> {
    let f_x = oracle.value(x);
    let gtd = oracle.gradient(x).dot(d);
    armijo_search(oracle, x, f_x, gtd, d, config.beta_ls, config.rho1).map(|(alpha, _, _)| alpha)
}

/// Runs the solver from the seeded Gaussian starting point.
pub fn nemo_solve<O: ObjectiveOracle + ?Sized>(
    oracle: &O,
    pairs: &[TransferPair],
    config: &SolverConfig,
) -> Result<Trace> {
    nemo_solve_from(oracle, pairs, config, gaussian_init(oracle.dimension(), config.seed))
}

/// Runs the solver from an explicit starting point.
pub fn nemo_solve_from<O: ObjectiveOracle + ?Sized>(
    oracle: &O,
    pairs: &[TransferPair],
    config: &SolverConfig,
    x0: DVector<f64>,
) -> Result<Trace> {
    nemo_solve_with(oracle, pairs, config, x0, |_| {})
}

/// [`nemo_solve_from`] with an observer invoked after every accepted step;
/// audits use it to see full iterates that the trace does not store.
pub fn nemo_solve_with<O, F>(
    oracle: &O,
    pairs: &[TransferPair],
    config: &SolverConfig,
    x0: DVector<f64>,
    mut on_step: F,
) -> Result<Trace>
where
    O: ObjectiveOracle + ?Sized,
    F: FnMut(&StepEvent<'_>),
{
    config.validate()?;
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("at least one transfer pair is required".into()));
    }
    let n = oracle.dimension();
    for (i, pair) in pairs.iter().enumerate() {
        if pair.fine_dim() != n {
            return Err(Error::DimensionMismatch(format!(
                "pair {i} acts on dimension {}, objective has {n}",
                pair.fine_dim()
            )));
        }
    }
    if x0.len() != n {
        return Err(Error::DimensionMismatch(format!("x0 length {} vs dimension {n}", x0.len())));
    }
    let mut schedule = OperatorSchedule::new(config.schedule.clone(), pairs.len())?;
    // Stream 1 so schedule draws stay independent of the initializer draws.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);

    let mut x = x0;
    let mut f = oracle.value(&x);
    if !f.is_finite() {
        return Err(Error::InvalidArgument(format!("objective is {f} at the starting point")));
    }
    let mut g = oracle.gradient(&x);
    let mut grad_norm = g.norm();
    let initial_f = f;
    let initial_grad_norm = grad_norm;

    let mut records = Vec::new();
    let mut mg_cycles = 0usize;
    let mut status: Option<SolveStatus> = None;

    for k in 0..config.max_iter {
        if grad_norm <= config.eps_stop {
            status = Some(SolveStatus::Converged);
            break;
        }
        let op_idx = schedule.next(&mut rng);
        let pair = &pairs[op_idx];
        let restricted_norm = pair.restrict(&g).norm();
        let kind = if restricted_norm > config.kappa * grad_norm && restricted_norm > config.epsilon {
            StepKind::Coarse
        } else {
            StepKind::Fine
        };

        let step = (|| -> Result<(DVector<f64>, Option<f64>, usize)> {
            match kind {
                StepKind::Coarse => {
                    let h = oracle.hessian(&x);
                    let (d, chi) = coarse_correction_step(&g, &h, pair, &InnerSolver::Direct)?;
                    Ok((d, Some(chi), 0))
                }
                StepKind::Fine => {
                    let h;
                    let h_ref = match config.fine_variant {
                        FineVariant::Newton => {
                            h = oracle.hessian(&x);
                            Some(&h)
                        }
                        _ => None,
                    };
                    let (d, cycles) =
                        fine_correction_step(&g, &config.fine_variant, h_ref, &config.inner_solver)?;
                    Ok((d, None, cycles))
                }
            }
        })();
        let (d, chi, cycles) = match step {
            Ok(v) => v,
            Err(e) => {
                status = Some(SolveStatus::Error { message: e.to_string() });
                break;
            }
        };
        mg_cycles += cycles;

        let gtd = g.dot(&d);
        let (alpha, f_new, x_new) = match armijo_search(oracle, &x, f, gtd, &d, config.beta_ls, config.rho1) {
            Ok(v) => v,
            Err(e) => {
                status = Some(SolveStatus::Error { message: e.to_string() });
                break;
            }
        };
        let g_new = oracle.gradient(&x_new);
        let grad_norm_new = g_new.norm();
        records.push(IterationRecord {
            k,
            step_kind: kind,
            alpha,
            f: f_new,
            grad_norm: grad_norm_new,
            restricted_grad_norm: pair.restrict(&g_new).norm(),
            chi,
            operator_index: Some(op_idx),
        });
        on_step(&StepEvent {
            k,
            kind,
            alpha,
            chi,
            operator_index: Some(op_idx),
            mg_cycles: cycles,
            x_before: &x,
            x_after: &x_new,
            grad_before: &g,
            grad_after: &g_new,
        });
        x = x_new;
        f = f_new;
        g = g_new;
        grad_norm = grad_norm_new;
    }

    let status = status.unwrap_or(if grad_norm <= config.eps_stop {
        SolveStatus::Converged
    } else {
        SolveStatus::IterationLimit
    });
    Ok(Trace { initial_f, initial_grad_norm, records, final_x: x, status, mg_cycles })
}

/// Damped Newton with Armijo backtracking: every step is a fine Newton
/// step, no transfer operators involved. The recorded restricted norm
/// equals the gradient norm (identity restriction semantics).
pub fn damped_newton_solve<O: ObjectiveOracle + ?Sized>(
    oracle: &O,
    config: &SolverConfig,
    x0: DVector<f64>,
) -> Result<Trace> {
    config.validate()?;
    let n = oracle.dimension();
    if x0.len() != n {
        return Err(Error::DimensionMismatch(format!("x0 length {} vs dimension {n}", x0.len())));
    }
    let mut x = x0;
    let mut f = oracle.value(&x);
    if !f.is_finite() {
        return Err(Error::InvalidArgument(format!("objective is {f} at the starting point")));
    }
    let mut g = oracle.gradient(&x);
    let mut grad_norm = g.norm();
    let initial_f = f;
    let initial_grad_norm = grad_norm;

    let mut records = Vec::new();
    let mut mg_cycles = 0usize;
    let mut status: Option<SolveStatus> = None;

    for k in 0..config.max_iter {
        if grad_norm <= config.eps_stop {
            status = Some(SolveStatus::Converged);
            break;
        }
        let outcome = (|| -> Result<(f64, f64, DVector<f64>)> {
            let h = oracle.hessian(&x);
            let (y, cycles) = config.inner_solver.solve_spd(&h, &g)?;
            mg_cycles += cycles;
            let d = -y;
            let gtd = g.dot(&d);
            armijo_search(oracle, &x, f, gtd, &d, config.beta_ls, config.rho1)
        })();
        let (alpha, f_new, x_new) = match outcome {
            Ok(v) => v,
            Err(e) => {
                status = Some(SolveStatus::Error { message: e.to_string() });
                break;
            }
        };
        let g_new = oracle.gradient(&x_new);
        let grad_norm_new = g_new.norm();
        records.push(IterationRecord {
            k,
            step_kind: StepKind::Fine,
            alpha,
            f: f_new,
            grad_norm: grad_norm_new,
            restricted_grad_norm: grad_norm_new,
            chi: None,
            operator_index: None,
        });
        x = x_new;
        f = f_new;
        g = g_new;
        grad_norm = grad_norm_new;
    }

    let status = status.unwrap_or(if grad_norm <= config.eps_stop {
        SolveStatus::Converged
    } else {
        SolveStatus::IterationLimit
    });
    Ok(Trace { initial_f, initial_grad_norm, records, final_x: x, status, mg_cycles })
}
