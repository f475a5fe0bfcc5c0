//! Multilevel Newton-type optimization toolkit.
//!
//! The solver minimizes a twice-differentiable objective on a fine grid by
//! interleaving two kinds of correction steps:
//!
//! * coarse correction: a Newton-type step restricted to the range of a
//!   prolongation operator `P`, using the Galerkin coarse Hessian built from
//!   the fine-level Hessian (no rediscretization of the objective),
//! * fine correction: a variable-metric step on the full space (steepest
//!   descent, Newton, or a user-supplied SPD metric).
//!
//! Both step kinds are globalized with Armijo backtracking. The crate also
//! ships the model problems used in the included experiments (1D Poisson and
//! a 2D nonlinear PDE objective), sparse SPD solvers (direct Cholesky and a
//! two-grid cycle), and an audit layer that checks the solver's convergence
//! guarantees on recorded traces.
//!
//! Module map:
//!
//! * [`linalg`]: sparse matrix plumbing shared by everything else,
//! * [`operators`]: prolongation/restriction pairs and their norms,
//! * [`problems`]: objective oracles and grid Laplacians,
//! * [`linsolve`]: SPD linear solvers (direct, smoother, two-grid),
//! * [`multilevel`]: the solver loop, step selection, line search, traces,
//! * [`analysis`]: audits of the convergence theory against traces,
//! * [`testing`]: seeded random instances for tests and the verify batteries.

pub mod analysis;
pub mod error;
pub mod linalg;
pub mod linsolve;
pub mod multilevel;
pub mod operators;
pub mod problems;
pub mod testing;

pub use error::{Error, Result};
