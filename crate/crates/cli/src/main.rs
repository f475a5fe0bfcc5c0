//! Batch front end: run experiments to trace CSVs, execute the audit
//! batteries, and compare solver variants on one problem.
//!
//! Exit codes: `run` returns 0 on convergence, 2 on the iteration limit,
//! 1 on any error (unreadable or invalid config included). `verify`
//! returns 0 when every audit passes, 3 when any fails, 1 on usage errors.
//! `compare` propagates the worst run outcome across its rows.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand};
use nalgebra::DVector;
use nemo_core::analysis::{operator_battery, theory_battery, AuditReport};
use nemo_core::linsolve::InnerSolver;
use nemo_core::multilevel::{
    damped_newton_solve, gaussian_init, nemo_solve_from, SolveStatus, Trace,
};
use nemo_core::operators::{build_interp_1d, build_interp_2d_between, TransferPair};
use nemo_core::problems::{build_example1, build_poisson_1d, ObjectiveOracle};
use nemo_core::Result;

use config::{ExperimentConfig, FineSolverKind, ProblemSpec};

/// Seed of the `verify` batteries; fixed so reports are reproducible.
const VERIFY_SEED: u64 = 2024;
const VERIFY_OPERATOR_TRIALS: usize = 1000;
const VERIFY_THEORY_TRIALS: usize = 100;

#[derive(Parser)]
#[command(name = "nemo", version, about = "Multilevel Newton-type optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its iteration trace as CSV.
    Run {
        /// Path to a key = value config file.
        config: PathBuf,
    },
    /// Run the randomized audit batteries at fixed seeds.
    Verify {
        /// all, operators, or theory (default all).
        scope: Option<String>,
    },
    /// Run several solver variants on the same problem and starting point.
    Compare {
        /// Path to a key = value config file.
        config: PathBuf,
        /// Two or more of: newton_only, nemo_direct, nemo_two_grid.
        #[arg(long, num_args = 1.., value_delimiter = ',')]
        variants: Vec<String>,
        /// Coarse levels for the nemo rows (example1 only); defaults to
        /// the config's nemo_coarse_level.
        #[arg(long, value_delimiter = ',')]
        coarse_levels: Vec<u32>,
    },
}

/// Prefixes relative output paths with `NEMO_OUTPUT_DIR` when set.
fn resolve_output(path: &Path) -> PathBuf {
    match std::env::var_os("NEMO_OUTPUT_DIR") {
        Some(dir) if path.is_relative() => PathBuf::from(dir).join(path),
        _ => path.to_path_buf(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Variant {
    NewtonOnly,
    NemoDirect,
    NemoTwoGrid,
}

impl Variant {
    fn parse(s: &str) -> Option<Variant> {
        match s {
            "newton_only" => Some(Variant::NewtonOnly),
            "nemo_direct" => Some(Variant::NemoDirect),
            "nemo_two_grid" => Some(Variant::NemoTwoGrid),
            _ => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Variant::NewtonOnly => "newton_only",
            Variant::NemoDirect => "nemo_direct",
            Variant::NemoTwoGrid => "nemo_two_grid",
        }
    }
}

struct RunPieces {
    oracle: Box<dyn ObjectiveOracle>,
    nemo_pair: TransferPair,
    mg_pair: TransferPair,
    x0: DVector<f64>,
}

/// Builds the oracle, transfer pairs, and starting point of a config.
/// Poisson runs start from zero; the 2D objective starts from the seeded
/// Gaussian so different seeds give different (but reproducible) studies.
fn build_pieces(cfg: &ExperimentConfig, coarse_override: Option<u32>) -> Result<RunPieces> {
    match cfg.problem {
        ProblemSpec::Poisson1d { n } => {
            let oracle = build_poisson_1d(n)?;
            let pair = build_interp_1d(n)?;
            let x0 = DVector::zeros(oracle.dimension());
            Ok(RunPieces { oracle: Box::new(oracle), nemo_pair: pair.clone(), mg_pair: pair, x0 })
        }
        ProblemSpec::Example1 { fine_level, nemo_coarse_level, mg_coarse_level, lambda } => {
            let nemo_coarse = coarse_override.unwrap_or(nemo_coarse_level);
            let oracle = build_example1(fine_level, lambda)?;
            let nemo_pair = build_interp_2d_between(nemo_coarse, fine_level)?;
            let mg_pair = build_interp_2d_between(mg_coarse_level, fine_level)?;
            let x0 = gaussian_init(oracle.dimension(), cfg.solver.seed);
            Ok(RunPieces { oracle: Box::new(oracle), nemo_pair, mg_pair, x0 })
        }
    }
}

struct RunOutcome {
    trace: Trace,
    wall: Duration,
    coarse_vars: Option<usize>,
    coarse_level: Option<u32>,
    uses_two_grid: bool,
}

fn execute(
    cfg: &ExperimentConfig,
    variant: Variant,
    coarse_override: Option<u32>,
) -> Result<RunOutcome> {
    let pieces = build_pieces(cfg, coarse_override)?;
    let mut solver = cfg.solver.clone();
    let uses_two_grid = variant == Variant::NemoTwoGrid;
    solver.inner_solver = if uses_two_grid {
        InnerSolver::two_grid(pieces.mg_pair.clone())
    } else {
        InnerSolver::Direct
    };

    let t0 = Instant::now();
    let trace = match variant {
        Variant::NewtonOnly => damped_newton_solve(pieces.oracle.as_ref(), &solver, pieces.x0)?,
        _ => nemo_solve_from(
            pieces.oracle.as_ref(),
            std::slice::from_ref(&pieces.nemo_pair),
            &solver,
            pieces.x0,
        )?,
    };
    let wall = t0.elapsed();

    let (coarse_vars, coarse_level) = match (variant, &cfg.problem) {
        (Variant::NewtonOnly, _) => (None, None),
        (_, ProblemSpec::Poisson1d { .. }) => (Some(pieces.nemo_pair.coarse_dim()), None),
        (_, ProblemSpec::Example1 { nemo_coarse_level, .. }) => (
            Some(pieces.nemo_pair.coarse_dim()),
            Some(coarse_override.unwrap_or(*nemo_coarse_level)),
        ),
    };
    Ok(RunOutcome { trace, wall, coarse_vars, coarse_level, uses_two_grid })
}

fn status_exit(status: &SolveStatus) -> u8 {
    match status {
        SolveStatus::Converged => 0,
        SolveStatus::IterationLimit => 2,
        SolveStatus::Error { .. } => 1,
    }
}

fn cmd_run(config_path: &Path) -> u8 {
    let text = match std::fs::read_to_string(config_path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", config_path.display());
            return 1;
        }
    };
    let cfg = match config::parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let variant = match cfg.fine_solver {
        FineSolverKind::Direct => Variant::NemoDirect,
        FineSolverKind::TwoGrid => Variant::NemoTwoGrid,
    };
    let outcome = match execute(&cfg, variant, None) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };

    let out = resolve_output(&cfg.trace_path);
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            if let Err(e) = std::fs::create_dir_all(parent) {
                eprintln!("error: cannot create {}: {e}", parent.display());
                return 1;
            }
        }
    }
    let file = match std::fs::File::create(&out) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: cannot write {}: {e}", out.display());
            return 1;
        }
    };
    if let Err(e) = outcome.trace.write_csv(std::io::BufWriter::new(file)) {
        eprintln!("error: writing {}: {e}", out.display());
        return 1;
    }

    let trace = &outcome.trace;
    let mg = if outcome.uses_two_grid { trace.mg_cycles.to_string() } else { "-".into() };
    println!(
        "status={} total_iter={} fine_iter={} coarse_iter={} mg_iter={mg} \
         final_grad_norm={:.6e} wall_time_s={:.3} trace={}",
        trace.status,
        trace.records.len(),
        trace.fine_steps(),
        trace.coarse_steps(),
        trace.final_grad_norm(),
        outcome.wall.as_secs_f64(),
        out.display()
    );
    status_exit(&trace.status)
}

fn cmd_verify(scope: Option<&str>) -> u8 {
    let scope = scope.unwrap_or("all");
    let (run_ops, run_theory) = match scope {
        "all" => (true, true),
        "operators" => (true, false),
        "theory" => (false, true),
        _ => {
            eprintln!("usage: nemo verify [all|operators|theory]");
            return 1;
        }
    };

    let mut report = AuditReport::new();
    if run_ops {
        match operator_battery(VERIFY_SEED, VERIFY_OPERATOR_TRIALS) {
            Ok(r) => report.extend(r.entries().iter().cloned()),
            Err(e) => {
                eprintln!("error: operator battery: {e}");
                return 1;
            }
        }
    }
    if run_theory {
        match theory_battery(VERIFY_SEED, VERIFY_THEORY_TRIALS) {
            Ok(r) => report.extend(r.entries().iter().cloned()),
            Err(e) => {
                eprintln!("error: theory battery: {e}");
                return 1;
            }
        }
    }

    print!("{report}");
    let csv_path = resolve_output(Path::new(&format!("verify_{scope}.csv")));
    if let Err(e) = report.write_csv(&csv_path) {
        eprintln!("error: cannot write {}: {e}", csv_path.display());
        return 1;
    }
    println!("report: {}", csv_path.display());

    if report.all_passed() {
        0
    } else {
        eprintln!("failed checks:");
        for e in report.failed() {
            eprintln!("  {e}");
        }
        3
    }
}

fn cmd_compare(config_path: &Path, variant_names: &[String], coarse_levels: &[u32]) -> u8 {
    let mut variants = Vec::new();
    for name in variant_names {
        match Variant::parse(name) {
            Some(v) => variants.push(v),
            None => {
                eprintln!(
                    "usage: --variants takes newton_only, nemo_direct, nemo_two_grid; got {name:?}"
                );
                return 1;
            }
        }
    }
    if variants.len() < 2 {
        eprintln!("usage: compare needs at least two variants");
        return 1;
    }

    let text = match std::fs::read_to_string(config_path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", config_path.display());
            return 1;
        }
    };
    let cfg = match config::parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    if !coarse_levels.is_empty() && matches!(cfg.problem, ProblemSpec::Poisson1d { .. }) {
        eprintln!("error: --coarse-levels applies to example1 configs only");
        return 1;
    }

    // One row per variant; nemo rows fan out over the requested coarse
    // levels. All rows share the seed, hence the starting point.
    let mut rows: Vec<(Variant, Option<u32>)> = Vec::new();
    for v in &variants {
        match v {
            Variant::NewtonOnly => rows.push((*v, None)),
            _ if coarse_levels.is_empty() => rows.push((*v, None)),
            _ => rows.extend(coarse_levels.iter().map(|&l| (*v, Some(l)))),
        }
    }

    println!(
        "{:<14} {:>12} {:>11} {:>10} {:>9} {:>8} {:>13}",
        "variant", "coarse level", "coarse vars", "total iter", "fine iter", "mg iter", "wall time (s)"
    );
    let mut worst = 0u8;
    for (variant, level) in rows {
        let outcome = match execute(&cfg, variant, level) {
            Ok(o) => o,
            Err(e) => {
                eprintln!("error: {}: {e}", variant.name());
                return 1;
            }
        };
        let trace = &outcome.trace;
        let dash = |o: Option<String>| o.unwrap_or_else(|| "-".into());
        println!(
            "{:<14} {:>12} {:>11} {:>10} {:>9} {:>8} {:>13.3}",
            variant.name(),
            dash(outcome.coarse_level.map(|l| l.to_string())),
            dash(outcome.coarse_vars.map(|v| v.to_string())),
            trace.records.len(),
            trace.fine_steps(),
            if outcome.uses_two_grid { trace.mg_cycles.to_string() } else { "-".into() },
            outcome.wall.as_secs_f64()
        );
        worst = worst.max(status_exit(&trace.status));
    }
    worst
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match &cli.command {
        Command::Run { config } => cmd_run(config),
        Command::Verify { scope } => cmd_verify(scope.as_deref()),
        Command::Compare { config, variants, coarse_levels } => {
            cmd_compare(config, variants, coarse_levels)
        }
    };
    ExitCode::from(code)
}
