//! A uniform handle on every solver the benchmarks run, and the step-size
//! grid search.

use std::fmt;
use std::str::FromStr;

use hd_core::baselines::{run_baseline, run_cg, Baseline, BaselineConfig};
use hd_core::flows::{run, Method, Monitor, RunResult, RunStatus, StepConfig};
use hd_core::{Certificate, CompositeProblem, DenseVector, Error, PrimalDualPoint};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

pub const DEFAULT_BUDGET: usize = 2000;
pub const DEFAULT_GRID_POINTS: usize = 60;
pub const DEFAULT_GRID_MIN: f64 = 1e-6;
pub const DEFAULT_GRID_MAX: f64 = 1e1;
/// A run is abandoned once its objective exceeds the starting value by this
/// factor (relative to `max(1, |f(y⁰)|)`).
const DIVERGENCE_FACTOR: f64 = 1e8;

/// Every method the benchmarks can run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Solver {
    Hd(Method),
    Baseline(Baseline),
    Cg,
}

impl Solver {
    pub fn all() -> Vec<Solver> {
        let mut out: Vec<Solver> = Method::ALL.into_iter().map(Solver::Hd).collect();
        out.extend(Baseline::ALL.into_iter().map(Solver::Baseline));
        out.push(Solver::Cg);
        out
    }

    pub fn tag(self) -> &'static str {
        match self {
            Solver::Hd(m) => m.tag(),
            Solver::Baseline(b) => b.tag(),
            Solver::Cg => "cg",
        }
    }

    /// Whether the step size matters (CG has none).
    pub fn has_step(self) -> bool {
        self != Solver::Cg
    }
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Solver {
    type Err = BenchError;
    fn from_str(s: &str) -> Result<Self> {
        Solver::all()
            .into_iter()
            .find(|m| m.tag() == s)
            .ok_or_else(|| {
                let known: Vec<_> = Solver::all().into_iter().map(Solver::tag).collect();
                BenchError::Config(format!(
                    "unknown method {s:?}, expected one of {}",
                    known.join(", ")
                ))
            })
    }
}

impl From<Solver> for String {
    fn from(s: Solver) -> String {
        s.tag().to_string()
    }
}

impl TryFrom<String> for Solver {
    type Error = BenchError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Runs `solver` from the origin for `iters` iterations. `step` is the
/// discretization step for the flows, the primal scale `ρ` for ADMM and
/// PDHG (PDHG then takes `σ = 1/(ρ‖A‖²)`), the gradient step for the
/// baselines, and is ignored by CG.
pub fn run_solver(
    solver: Solver,
    problem: &CompositeProblem,
    cert: Option<&Certificate>,
    step: f64,
    iters: usize,
    monitor: Monitor,
) -> Result<RunResult> {
    let y0 = DenseVector::zeros(problem.m());
    let f0 = problem.primal_value(&y0)?;
    let divergence_threshold = f0 + DIVERGENCE_FACTOR * f0.abs().max(1.0);
    let result = match solver {
        Solver::Hd(method) => {
            let z0 = PrimalDualPoint::from_yq(problem, y0, DenseVector::zeros(problem.m()))?;
            let sigma = match method {
                Method::Pdhg => 1.0 / (step * problem.a().norm2_estimate().powi(2)),
                _ => 1.0,
            };
            let cfg = StepConfig {
                epsilon: step,
                rho: step,
                sigma,
                max_iters: iters,
                stop_tol: 0.0,
                divergence_threshold,
                monitor,
            };
            run(method, problem, &z0, &cfg, cert)?
        }
        Solver::Baseline(b) => {
            let cfg = BaselineConfig {
                step,
                max_iters: iters,
                restart: true,
                monitor,
                divergence_threshold,
            };
            run_baseline(b, problem, &y0, &cfg, cert)?
        }
        Solver::Cg => run_cg(problem, iters, cert)?,
    };
    Ok(result)
}

/// `min_k (f(yᵏ) − f⋆)` over a run; `+∞` for diverged or empty runs.
pub fn best_error(result: &RunResult, f_star: f64) -> f64 {
    if matches!(result.status, RunStatus::Diverged { .. }) {
        return f64::INFINITY;
    }
    result
        .trace
        .records
        .iter()
        .map(|r| r.primal_obj - f_star)
        .map(|e| if e.is_nan() { f64::INFINITY } else { e })
        .fold(f64::INFINITY, f64::min)
}

/// `n` logarithmically spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
                .collect()
        }
    }
}

pub fn default_grid() -> Vec<f64> {
    log_grid(DEFAULT_GRID_MIN, DEFAULT_GRID_MAX, DEFAULT_GRID_POINTS)
}

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub best_step: f64,
    pub best_score: f64,
    /// `(step, score)` for every grid point, in grid order.
    pub scores: Vec<(f64, f64)>,
    /// The run at the best step, objective column only.
    pub best_run: RunResult,
}

/// Runs `solver` for `budget` iterations at every step in `grid` and returns
/// the step minimizing `min_k (f(yᵏ) − f⋆)`. Diverged runs score `+∞`; ties
/// go to the smaller step.
pub fn step_search(
    solver: Solver,
    problem: &CompositeProblem,
    cert: &Certificate,
    grid: &[f64],
    budget: usize,
) -> Result<SearchOutcome> {
    if grid.is_empty() {
        return Err(Error::Empty("step grid").into());
    }
    if let Some(bad) = grid.iter().find(|s| !(**s > 0.0) || !s.is_finite()) {
        return Err(BenchError::Config(format!(
            "step grid entries must be positive, got {bad}"
        )));
    }
    let runs = grid
        .par_iter()
        .map(|&step| {
            let r = run_solver(solver, problem, None, step, budget, Monitor::Objective)?;
            Ok((best_error(&r, cert.f_star), r))
        })
        .collect::<Result<Vec<_>>>()?;
    let scores: Vec<(f64, f64)> = grid
        .iter()
        .zip(&runs)
        .map(|(&step, (s, _))| (step, *s))
        .collect();
    let best = scores
        .iter()
        .enumerate()
        .filter(|(_, (_, s))| s.is_finite())
        .fold(None::<(usize, f64)>, |acc, (i, &(_, s))| match acc {
            Some((_, bs)) if bs <= s => acc,
            _ => Some((i, s)),
        });
    match best {
        Some((i, best_score)) => {
            let best_run = runs.into_iter().nth(i).expect("index from the same list").1;
            Ok(SearchOutcome {
                best_step: grid[i],
                best_score,
                scores,
                best_run,
            })
        }
        None => Err(Error::AllDiverged(grid.to_vec()).into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{gen_ls, toy1d};

    #[test]
    fn tags_round_trip() {
        for s in Solver::all() {
            assert_eq!(s.tag().parse::<Solver>().unwrap(), s);
        }
        assert!("newton".parse::<Solver>().unwrap_err().is_config());
    }

    #[test]
    fn grid_endpoints() {
        let g = default_grid();
        assert_eq!(g.len(), 60);
        assert!((g[0] - 1e-6).abs() < 1e-18);
        assert!((g[59] - 10.0).abs() < 1e-12);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn toy_gd_prefers_step_near_inverse_curvature() {
        // f(y) = ½(y − 1)² + ½y², curvature 2: GD with step 1/2 lands on the
        // optimum in one step.
        let p = CompositeProblem::new(
            hd_core::Atom::quadratic_residual(DenseVector::from([1.0])),
            hd_core::Atom::scaled_sqnorm(1.0, hd_core::DenseMatrix::identity(1)).unwrap(),
            hd_core::DenseMatrix::identity(1),
        )
        .unwrap();
        let c = hd_core::certify(&p, hd_core::CertifyMethod::ClosedForm).unwrap();
        let grid = [0.1, 0.25, 0.5, 0.8, 1.5];
        let out = step_search(Solver::Baseline(Baseline::Gd), &p, &c, &grid, 1).unwrap();
        assert_eq!(out.best_step, 0.5);
        assert!(out.best_score.abs() < 1e-15);
        // Steps above 2/L = 1 diverge once the budget is long enough.
        let out = step_search(Solver::Baseline(Baseline::Gd), &p, &c, &grid, 400).unwrap();
        assert!(out.scores[4].1.is_infinite());
    }

    #[test]
    fn all_diverged_lists_grid() {
        let (p, c) = gen_ls(10, 10, 1.0, 0).unwrap();
        let grid = vec![1e3, 1e4];
        match step_search(Solver::Baseline(Baseline::Gd), &p, &c, &grid, 200) {
            Err(BenchError::Core(Error::AllDiverged(g))) => assert_eq!(g, grid),
            other => panic!("expected AllDiverged, got {other:?}"),
        }
    }

    #[test]
    fn empty_grid_rejected() {
        let (p, c) = toy1d().unwrap();
        assert!(step_search(Solver::Baseline(Baseline::Gd), &p, &c, &[], 10).is_err());
    }
}
