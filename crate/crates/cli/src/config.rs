//! Experiment configuration: flat `key = value` text with `[section]`
//! headers, no external format dependency. Unknown keys are rejected so
//! typos fail loudly instead of silently running defaults.
//!
//! ```text
//! [problem]
//! kind = example1
//! fine_level = 6
//! nemo_coarse_level = 4
//! lambda = 10.0
//!
//! [solver]
//! kappa = 0.01
//! eps_stop = 1e-9
//! fine_variant = newton
//! fine_solver = direct
//!
//! [output]
//! trace = level6.csv
//! ```

use std::path::PathBuf;

use nemo_core::multilevel::{FineVariant, SolverConfig};
use nemo_core::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSpec {
    Poisson1d {
        n: usize,
    },
    Example1 {
        fine_level: u32,
        nemo_coarse_level: u32,
        /// Coarse level of the two-grid inner solver; defaults to the
        /// NeMO coarse level when absent.
        mg_coarse_level: u32,
        lambda: f64,
    },
}

/// How fine-level Newton systems are solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FineSolverKind {
    Direct,
    TwoGrid,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub solver: SolverConfig,
    pub fine_solver: FineSolverKind,
    pub trace_path: PathBuf,
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Parse(format!("bad value for {key}: {value:?}")))
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut section = String::new();

    let mut kind: Option<String> = None;
    let mut n: Option<usize> = None;
    let mut fine_level: Option<u32> = None;
    let mut nemo_coarse_level: Option<u32> = None;
    let mut mg_coarse_level: Option<u32> = None;
    let mut lambda = 10.0f64;

    let mut solver = SolverConfig::default();
    let mut fine_solver = FineSolverKind::Direct;
    let mut trace_path = PathBuf::from("trace.csv");

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            section = name.trim().to_string();
            if !matches!(section.as_str(), "problem" | "solver" | "output") {
                return Err(Error::Parse(format!("unknown section [{section}]")));
            }
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Parse(format!("line {}: expected key = value, got {line:?}", lineno + 1))
        })?;
        let (key, value) = (key.trim(), value.trim());

        match (section.as_str(), key) {
            ("problem", "kind") => kind = Some(value.to_string()),
            ("problem", "n") => n = Some(parse_num(key, value)?),
            ("problem", "fine_level") => fine_level = Some(parse_num(key, value)?),
            ("problem", "nemo_coarse_level") => nemo_coarse_level = Some(parse_num(key, value)?),
            ("problem", "mg_coarse_level") => mg_coarse_level = Some(parse_num(key, value)?),
            ("problem", "lambda") => lambda = parse_num(key, value)?,
            ("solver", "kappa") => solver.kappa = parse_num(key, value)?,
            ("solver", "epsilon") => solver.epsilon = parse_num(key, value)?,
            ("solver", "rho1") => solver.rho1 = parse_num(key, value)?,
            ("solver", "beta_ls") => solver.beta_ls = parse_num(key, value)?,
            ("solver", "eps_stop") => solver.eps_stop = parse_num(key, value)?,
            ("solver", "max_iter") => solver.max_iter = parse_num(key, value)?,
            ("solver", "seed") => solver.seed = parse_num(key, value)?,
            ("solver", "fine_variant") => {
                solver.fine_variant = match value {
                    "newton" => FineVariant::Newton,
                    "steepest_descent" => FineVariant::SteepestDescent,
                    other => {
                        return Err(Error::Parse(format!(
                            "fine_variant must be newton or steepest_descent, got {other:?}"
                        )))
                    }
                }
            }
            ("solver", "fine_solver") => {
                fine_solver = match value {
                    "direct" => FineSolverKind::Direct,
                    "two_grid" => FineSolverKind::TwoGrid,
                    other => {
                        return Err(Error::Parse(format!(
                            "fine_solver must be direct or two_grid, got {other:?}"
                        )))
                    }
                }
            }
            ("output", "trace") => trace_path = PathBuf::from(value),
            ("", k) => return Err(Error::Parse(format!("key {k:?} before any [section]"))),
            (s, k) => return Err(Error::Parse(format!("unknown key {k:?} in section [{s}]"))),
        }
    }

    let problem = match kind.as_deref() {
        Some("poisson1d") => {
            let n = n.ok_or_else(|| Error::Parse("poisson1d needs n".into()))?;
            ProblemSpec::Poisson1d { n }
        }
        Some("example1") => {
            let fine_level =
                fine_level.ok_or_else(|| Error::Parse("example1 needs fine_level".into()))?;
            let nemo_coarse_level = nemo_coarse_level
                .ok_or_else(|| Error::Parse("example1 needs nemo_coarse_level".into()))?;
            let mg_coarse_level = mg_coarse_level.unwrap_or(nemo_coarse_level);
            for (name, level) in
                [("nemo_coarse_level", nemo_coarse_level), ("mg_coarse_level", mg_coarse_level)]
            {
                if level >= fine_level {
                    return Err(Error::InvalidConfig(format!(
                        "{name} = {level} must be strictly below fine_level = {fine_level}"
                    )));
                }
            }
            ProblemSpec::Example1 { fine_level, nemo_coarse_level, mg_coarse_level, lambda }
        }
        Some(other) => {
            return Err(Error::Parse(format!(
                "problem kind must be poisson1d or example1, got {other:?}"
            )))
        }
        None => return Err(Error::Parse("missing [problem] kind".into())),
    };

    solver.validate()?;
    Ok(ExperimentConfig { problem, solver, fine_solver, trace_path })
}
