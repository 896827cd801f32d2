//! The two benchmark experiments: a conditioning sweep on regularized least
//! squares and an ill-conditioned elastic-net logistic regression.

use std::collections::BTreeMap;
use std::path::Path;

use hd_core::baselines::Baseline;
use hd_core::flows::{Method, Monitor, RunResult, RunStatus};
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};
use crate::generators::{conditioning_sequence, gen_logreg, gen_ls, LogregSpec, DEFAULT_DELTA};
use crate::search::{default_grid, run_solver, step_search, Solver, DEFAULT_BUDGET};
use crate::svg::{emit_svg, PlotStyle, Series};

/// Iteration budget of the logistic benchmark.
pub const LOGREG_BUDGET: usize = 5000;
/// Objective error the logistic benchmark counts iterations to.
pub const LOGREG_TOLERANCE: f64 = 1e-6;
/// Most points drawn per plotted series.
const MAX_PLOT_POINTS: usize = 400;

pub const LS_SOLVERS: [Solver; 5] = [
    Solver::Hd(Method::HdExplicitYq),
    Solver::Baseline(Baseline::Gd),
    Solver::Baseline(Baseline::Pgd),
    Solver::Baseline(Baseline::Rag),
    Solver::Cg,
];

pub const LOGREG_SOLVERS: [Solver; 2] = [
    Solver::Hd(Method::HdExplicitYq),
    Solver::Baseline(Baseline::Pgd),
];

/// One row of a sweep: a single problem instance and how every method did.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub j: usize,
    pub condition_number: f64,
    /// Step used per method; methods without a step are absent.
    pub best_step: BTreeMap<String, f64>,
    /// `f(y_T) − f⋆` of the last iterate, floored at the rounding level of
    /// `f⋆`; `None` for a diverged run.
    pub final_error: BTreeMap<String, Option<f64>>,
    /// First iteration with `f − f⋆` at or below the experiment tolerance.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub iterations_to_tolerance: BTreeMap<String, Option<usize>>,
    /// Trace CSV per method, relative to the output directory.
    pub traces: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub experiment: String,
    pub seed: u64,
    pub budget: usize,
    pub records: Vec<SweepRecord>,
}

/// A finished run of one method on one sweep member.
#[derive(Clone, Debug)]
pub struct MethodRun {
    pub solver: Solver,
    pub j: usize,
    pub step: Option<f64>,
    pub f_star: f64,
    pub result: RunResult,
}

impl MethodRun {
    pub fn diverged(&self) -> bool {
        matches!(self.result.status, RunStatus::Diverged { .. })
    }

    /// `f(yᵏ) − f⋆` per recorded iteration.
    pub fn errors(&self) -> Vec<f64> {
        self.result
            .trace
            .records
            .iter()
            .map(|r| r.primal_obj - self.f_star)
            .collect()
    }

    pub fn final_error(&self) -> Option<f64> {
        if self.diverged() {
            return None;
        }
        let last = self.result.trace.last()?;
        Some((last.primal_obj - self.f_star).max(error_floor(self.f_star)))
    }

    pub fn iterations_to(&self, tol: f64) -> Option<usize> {
        self.result
            .trace
            .records
            .iter()
            .find(|r| r.primal_obj - self.f_star <= tol)
            .map(|r| r.k)
    }

    fn trace_file(&self) -> String {
        format!("traces/{}_j{}.csv", self.solver.tag(), self.j)
    }
}

/// Smallest objective error distinguishable from rounding in `f⋆`.
pub fn error_floor(f_star: f64) -> f64 {
    f64::EPSILON * f_star.abs().max(1.0)
}

#[derive(Clone, Debug)]
pub struct SweepOutput {
    pub result: SweepResult,
    pub runs: Vec<MethodRun>,
}

impl SweepOutput {
    pub fn run(&self, solver: Solver, j: usize) -> Option<&MethodRun> {
        self.runs.iter().find(|r| r.solver == solver && r.j == j)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LsAffineConfig {
    pub n: usize,
    pub m: usize,
    pub lambda: f64,
    pub jmax: usize,
    pub delta: f64,
    pub seed: u64,
    pub budget: usize,
    pub grid: Vec<f64>,
}

impl Default for LsAffineConfig {
    fn default() -> Self {
        Self {
            n: 200,
            m: 200,
            lambda: 1.0,
            jmax: 10,
            delta: DEFAULT_DELTA,
            seed: 0,
            budget: DEFAULT_BUDGET,
            grid: default_grid(),
        }
    }
}

/// Runs HD and the baselines on `½‖AM^jy − b‖² + (λ/2)‖M^jy‖²` for
/// `j = 0..=jmax`. HD uses the step found at `j = 0` for every `j`; each
/// baseline gets its own step search per `j`. With `outdir`, writes the
/// sweep JSON, one trace CSV per run and two SVG figures.
pub fn bench_ls_affine(cfg: &LsAffineConfig, outdir: Option<&Path>) -> Result<SweepOutput> {
    let (base, base_cert) = gen_ls(cfg.n, cfg.m, cfg.lambda, cfg.seed)?;
    let seq = conditioning_sequence(&base, &base_cert, cfg.jmax, cfg.delta, cfg.seed)?;
    let hd = Solver::Hd(Method::HdExplicitYq);
    let hd_step = step_search(hd, &seq[0].problem, &seq[0].cert, &cfg.grid, cfg.budget)?.best_step;

    let mut runs = Vec::new();
    let mut records = Vec::new();
    for member in &seq {
        let mut record = SweepRecord {
            j: member.j,
            condition_number: member.condition_number,
            best_step: BTreeMap::new(),
            final_error: BTreeMap::new(),
            iterations_to_tolerance: BTreeMap::new(),
            traces: BTreeMap::new(),
        };
        for solver in LS_SOLVERS {
            let (step, result) = match solver {
                Solver::Hd(_) => (
                    Some(hd_step),
                    run_solver(
                        solver,
                        &member.problem,
                        Some(&member.cert),
                        hd_step,
                        cfg.budget,
                        Monitor::Full,
                    )?,
                ),
                Solver::Cg => (
                    None,
                    run_solver(
                        solver,
                        &member.problem,
                        Some(&member.cert),
                        0.0,
                        cfg.budget,
                        Monitor::Full,
                    )?,
                ),
                Solver::Baseline(_) => {
                    let found =
                        step_search(solver, &member.problem, &member.cert, &cfg.grid, cfg.budget)?;
                    (Some(found.best_step), found.best_run)
                }
            };
            let run = MethodRun {
                solver,
                j: member.j,
                step,
                f_star: member.cert.f_star,
                result,
            };
            if let Some(s) = step {
                record.best_step.insert(solver.tag().into(), s);
            }
            record
                .final_error
                .insert(solver.tag().into(), run.final_error());
            record.traces.insert(solver.tag().into(), run.trace_file());
            runs.push(run);
        }
        records.push(record);
    }
    let output = SweepOutput {
        result: SweepResult {
            experiment: "ls_affine".into(),
            seed: cfg.seed,
            budget: cfg.budget,
            records,
        },
        runs,
    };
    if let Some(dir) = outdir {
        write_outputs(dir, &output)?;
        let jmax = cfg.jmax.max(1) as f64;
        let opacity = |j: usize| 0.25 + 0.75 * j as f64 / jmax;
        let errors: Vec<Series> = output
            .runs
            .iter()
            .map(|r| {
                let color = LS_SOLVERS.iter().position(|s| *s == r.solver).unwrap_or(0);
                Series::new(r.solver.tag(), by_iteration(&r.errors()), color)
                    .with_opacity(opacity(r.j))
            })
            .collect();
        emit_svg(
            &dir.join("objective_error.svg"),
            &errors,
            &PlotStyle::new(
                "Objective error across j (darker = larger j)",
                "iteration",
                "f(y) − f⋆",
            ),
        )?;
        let mut hd_series = Vec::new();
        for r in output.runs.iter().filter(|r| r.solver == hd) {
            let recs = &r.result.trace.records;
            let ham: Vec<f64> = recs
                .iter()
                .map(|x| x.hamiltonian.unwrap_or(f64::NAN))
                .collect();
            let gap: Vec<f64> = recs
                .iter()
                .map(|x| x.full_gap.unwrap_or(f64::NAN))
                .collect();
            hd_series
                .push(Series::new("hamiltonian", by_iteration(&ham), 0).with_opacity(opacity(r.j)));
            hd_series
                .push(Series::new("full gap", by_iteration(&gap), 1).with_opacity(opacity(r.j)));
        }
        emit_svg(
            &dir.join("hd_hamiltonian.svg"),
            &hd_series,
            &PlotStyle::new(
                "HD Hamiltonian and duality gap across j",
                "iteration",
                "value",
            ),
        )?;
    }
    Ok(output)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogregBenchConfig {
    pub spec: LogregSpec,
    pub budget: usize,
    pub grid: Vec<f64>,
    pub tolerance: f64,
}

impl Default for LogregBenchConfig {
    fn default() -> Self {
        Self {
            spec: LogregSpec::default(),
            budget: LOGREG_BUDGET,
            grid: default_grid(),
            tolerance: LOGREG_TOLERANCE,
        }
    }
}

/// HD against proximal gradient on an ill-conditioned elastic-net logistic
/// regression, each with its own searched step.
pub fn bench_logreg(cfg: &LogregBenchConfig, outdir: Option<&Path>) -> Result<SweepOutput> {
    let inst = gen_logreg(&cfg.spec)?;
    let mut record = SweepRecord {
        j: 0,
        condition_number: inst.condition_number,
        best_step: BTreeMap::new(),
        final_error: BTreeMap::new(),
        iterations_to_tolerance: BTreeMap::new(),
        traces: BTreeMap::new(),
    };
    let mut runs = Vec::new();
    for solver in LOGREG_SOLVERS {
        let found = step_search(solver, &inst.problem, &inst.cert, &cfg.grid, cfg.budget)?;
        let run = MethodRun {
            solver,
            j: 0,
            step: Some(found.best_step),
            f_star: inst.cert.f_star,
            result: found.best_run,
        };
        let tag = solver.tag().to_string();
        record.best_step.insert(tag.clone(), found.best_step);
        record.final_error.insert(tag.clone(), run.final_error());
        record
            .iterations_to_tolerance
            .insert(tag.clone(), run.iterations_to(cfg.tolerance));
        record.traces.insert(tag, run.trace_file());
        runs.push(run);
    }
    let output = SweepOutput {
        result: SweepResult {
            experiment: "logreg".into(),
            seed: cfg.spec.seed,
            budget: cfg.budget,
            records: vec![record],
        },
        runs,
    };
    if let Some(dir) = outdir {
        write_outputs(dir, &output)?;
        let series: Vec<Series> = output
            .runs
            .iter()
            .enumerate()
            .map(|(i, r)| Series::new(r.solver.tag(), by_iteration(&r.errors()), i))
            .collect();
        emit_svg(
            &dir.join("objective_error.svg"),
            &series,
            &PlotStyle::new("Elastic-net logistic regression", "iteration", "f(y) − f⋆"),
        )?;
    }
    Ok(output)
}

/// `(k, v_k)` with `k` from 1, thinned to at most [`MAX_PLOT_POINTS`] points
/// while keeping the last.
fn by_iteration(values: &[f64]) -> Vec<(f64, f64)> {
    let stride = values.len().div_ceil(MAX_PLOT_POINTS).max(1);
    let mut pts: Vec<(f64, f64)> = values
        .iter()
        .enumerate()
        .step_by(stride)
        .map(|(i, &v)| ((i + 1) as f64, v))
        .collect();
    if let Some(&last) = values.last() {
        if !(values.len() - 1).is_multiple_of(stride) {
            pts.push((values.len() as f64, last));
        }
    }
    pts
}

/// Writes `sweep.json` and one CSV per run under `dir`. Wall-clock time is
/// left out so that reruns produce identical files.
fn write_outputs(dir: &Path, output: &SweepOutput) -> Result<()> {
    let traces = dir.join("traces");
    std::fs::create_dir_all(&traces).map_err(|e| BenchError::io(&traces, e))?;
    for run in &output.runs {
        let path = dir.join(run.trace_file());
        let file = std::fs::File::create(&path).map_err(|e| BenchError::io(&path, e))?;
        run.result
            .trace
            .write_csv(std::io::BufWriter::new(file), false)
            .map_err(|e| BenchError::io(&path, e))?;
    }
    let path = dir.join("sweep.json");
    let text = serde_json::to_string_pretty(&output.result)?;
    std::fs::write(&path, text + "\n").map_err(|e| BenchError::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search::log_grid;

    fn small_ls() -> LsAffineConfig {
        LsAffineConfig {
            n: 12,
            m: 12,
            jmax: 2,
            budget: 60,
            grid: log_grid(1e-3, 1.0, 8),
            ..LsAffineConfig::default()
        }
    }

    #[test]
    fn thinning_keeps_endpoints() {
        let v: Vec<f64> = (0..1001).map(|i| i as f64 + 1.0).collect();
        let pts = by_iteration(&v);
        assert!(pts.len() <= MAX_PLOT_POINTS + 1);
        assert_eq!(pts[0], (1.0, 1.0));
        assert_eq!(*pts.last().unwrap(), (1001.0, 1001.0));
        assert_eq!(by_iteration(&[3.0]), vec![(1.0, 3.0)]);
    }

    #[test]
    fn sweep_has_contiguous_records_and_all_methods() {
        let out = bench_ls_affine(&small_ls(), None).unwrap();
        let js: Vec<usize> = out.result.records.iter().map(|r| r.j).collect();
        assert_eq!(js, vec![0, 1, 2]);
        for r in &out.result.records {
            assert_eq!(r.final_error.len(), LS_SOLVERS.len());
            assert!(!r.best_step.contains_key("cg"));
        }
        let hd_steps: Vec<f64> = out
            .result
            .records
            .iter()
            .map(|r| r.best_step["hd_explicit_yq"])
            .collect();
        assert!(hd_steps.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn sweep_outputs_are_reproducible() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        bench_ls_affine(&small_ls(), Some(d1.path())).unwrap();
        bench_ls_affine(&small_ls(), Some(d2.path())).unwrap();
        for f in [
            "sweep.json",
            "objective_error.svg",
            "hd_hamiltonian.svg",
            "traces/gd_j2.csv",
            "traces/cg_j0.csv",
        ] {
            let a = std::fs::read(d1.path().join(f)).unwrap();
            let b = std::fs::read(d2.path().join(f)).unwrap();
            assert!(!a.is_empty(), "{f} is empty");
            assert_eq!(a, b, "{f} differs");
        }
        let json: SweepResult =
            serde_json::from_slice(&std::fs::read(d1.path().join("sweep.json")).unwrap()).unwrap();
        assert_eq!(json.records.len(), 3);
    }

    #[test]
    fn error_floor_scales_with_optimum() {
        assert_eq!(error_floor(0.0), f64::EPSILON);
        assert_eq!(error_floor(-100.0), 100.0 * f64::EPSILON);
    }
}
