use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use hd_bench::config::ProblemConfig;
use hd_bench::experiments::{
    bench_logreg, bench_ls_affine, LogregBenchConfig, LsAffineConfig, SweepOutput,
};
use hd_bench::generators::{LogregSpec, DEFAULT_DELTA};
use hd_bench::search::{run_solver, Solver, DEFAULT_BUDGET};
use hd_bench::BenchError;
use hd_core::flows::{Monitor, RunStatus};
use hd_core::verify;
use serde::Serialize;

const EXIT_CHECK_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(
    name = "hd",
    version,
    about = "Hamiltonian descent solvers, benchmarks and verification checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one method on a generated problem and write its trace as CSV.
    Solve {
        /// Problem configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// hd_explicit_xp, hd_explicit_yq, hd_implicit, admm, pdhg, gd, pgd, rag or cg.
        #[arg(long)]
        method: Solver,
        /// Step size (ρ for ADMM and PDHG); not used by cg.
        #[arg(long)]
        step: Option<f64>,
        #[arg(long, default_value_t = 1000)]
        iters: usize,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a benchmark experiment.
    Bench {
        #[command(subcommand)]
        experiment: BenchCommand,
    },
    /// Run verification checks.
    Check {
        #[command(subcommand)]
        which: CheckCommand,
    },
    /// Generate a problem and print its optimality certificate as JSON.
    Certify {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Least squares under a growing sequence of right transformations.
    LsAffine {
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        jmax: usize,
        #[arg(long)]
        outdir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_DELTA)]
        delta: f64,
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: usize,
    },
    /// Ill-conditioned elastic-net logistic regression.
    Logreg {
        #[arg(long, default_value_t = 1e6)]
        cond: f64,
        #[arg(long)]
        outdir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = hd_bench::experiments::LOGREG_BUDGET)]
        budget: usize,
    },
}

#[derive(Subcommand)]
enum CheckCommand {
    /// Every check in the verification suite.
    All {
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

#[derive(Serialize)]
struct CertificateReport<'a> {
    n: usize,
    m: usize,
    f_star: f64,
    d_star: f64,
    tolerance: f64,
    condition_number: Option<f64>,
    y_star: &'a [f64],
    p_star: &'a [f64],
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            if err
                .downcast_ref::<BenchError>()
                .is_some_and(BenchError::is_config)
            {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Solve {
            config,
            method,
            step,
            iters,
            out,
        } => solve(&config, method, step, iters, &out),
        Command::Bench { experiment } => bench(experiment),
        Command::Check {
            which: CheckCommand::All { seed },
        } => check_all(seed),
        Command::Certify { config } => {
            let built = ProblemConfig::load(&config)?.build()?;
            let report = CertificateReport {
                n: built.problem.n(),
                m: built.problem.m(),
                f_star: built.cert.f_star,
                d_star: built.cert.d_star,
                tolerance: built.cert.tolerance,
                condition_number: built.condition_number,
                y_star: &built.cert.y_star,
                p_star: &built.cert.p_star,
            };
            let mut out = std::io::stdout().lock();
            match writeln!(out, "{}", serde_json::to_string_pretty(&report)?) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
                _ => Ok(ExitCode::SUCCESS),
            }
        }
    }
}

fn solve(
    config: &Path,
    method: Solver,
    step: Option<f64>,
    iters: usize,
    out: &Path,
) -> Result<ExitCode> {
    let built = ProblemConfig::load(config)?.build()?;
    let step = match (step, method.has_step()) {
        (Some(s), _) => s,
        (None, false) => 0.0,
        (None, true) => return Err(BenchError::Config(format!("{method} needs --step")).into()),
    };
    if method.has_step() && !(step > 0.0 && step.is_finite()) {
        return Err(BenchError::Config(format!("--step must be positive, got {step}")).into());
    }
    let result = run_solver(
        method,
        &built.problem,
        Some(&built.cert),
        step,
        iters,
        Monitor::Full,
    )?;
    let file = std::fs::File::create(out).with_context(|| format!("creating {}", out.display()))?;
    result
        .trace
        .write_csv(std::io::BufWriter::new(file), true)
        .with_context(|| format!("writing {}", out.display()))?;
    let status = match &result.status {
        RunStatus::MaxIters => "max_iters".to_string(),
        RunStatus::Converged { at_iter } => format!("converged at {at_iter}"),
        RunStatus::Diverged { at_iter, reason } => format!("diverged at {at_iter}: {reason}"),
    };
    match result.trace.last() {
        Some(last) => println!(
            "{method}: {status}; f - f* = {:.3e} after {} iterations",
            last.primal_obj - built.cert.f_star,
            last.k
        ),
        None => println!("{method}: {status}; no iterations"),
    }
    Ok(ExitCode::SUCCESS)
}

fn bench(experiment: BenchCommand) -> Result<ExitCode> {
    let (output, outdir) = match experiment {
        BenchCommand::LsAffine {
            n,
            jmax,
            outdir,
            seed,
            delta,
            budget,
        } => {
            let cfg = LsAffineConfig {
                n,
                m: n,
                jmax,
                seed,
                delta,
                budget,
                ..LsAffineConfig::default()
            };
            (bench_ls_affine(&cfg, Some(&outdir))?, outdir)
        }
        BenchCommand::Logreg {
            cond,
            outdir,
            seed,
            budget,
        } => {
            let cfg = LogregBenchConfig {
                spec: LogregSpec {
                    target_cond: cond,
                    seed,
                    ..LogregSpec::default()
                },
                budget,
                ..LogregBenchConfig::default()
            };
            (bench_logreg(&cfg, Some(&outdir))?, outdir)
        }
    };
    print_sweep(&output);
    println!("wrote {}", outdir.join("sweep.json").display());
    Ok(ExitCode::SUCCESS)
}

fn print_sweep(output: &SweepOutput) {
    for rec in &output.result.records {
        let errors: Vec<String> = rec
            .final_error
            .iter()
            .map(|(m, e)| match e {
                Some(e) => format!("{m}={e:.2e}"),
                None => format!("{m}=diverged"),
            })
            .collect();
        println!(
            "j={:<3} cond={:.2e}  {}",
            rec.j,
            rec.condition_number,
            errors.join("  ")
        );
        for (m, k) in &rec.iterations_to_tolerance {
            match k {
                Some(k) => println!("  {m} reached tolerance at iteration {k}"),
                None => println!("  {m} did not reach tolerance"),
            }
        }
    }
}

fn check_all(seed: u64) -> Result<ExitCode> {
    let reports = verify::run_all(seed);
    for r in &reports {
        println!("{r}");
    }
    let failed = reports.iter().filter(|r| !r.pass).count();
    println!("{}/{} checks passed", reports.len() - failed, reports.len());
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_CHECK_FAILURE)
    })
}
