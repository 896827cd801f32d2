//! Generic driver that iterates one method and records a per-iteration trace.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::splitting::{Admm, AdmmState, Pdhg, PdhgState};
use super::{field_xp, FlowField, ImplicitStepper, Space};
use crate::atoms::Capabilities;
use crate::error::{Error, Result};
use crate::linalg::DenseVector;
use crate::problem::{Certificate, CompositeProblem, PrimalDualPoint};

pub const TRACE_HEADER: &str =
    "k,wall_seconds,primal_obj,dual_obj,full_gap,partial_gap,hamiltonian,grad_norm,step_norm";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    HdExplicitXp,
    HdExplicitYq,
    HdImplicit,
    Admm,
    Pdhg,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::HdExplicitXp,
        Method::HdExplicitYq,
        Method::HdImplicit,
        Method::Admm,
        Method::Pdhg,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Method::HdExplicitXp => "hd_explicit_xp",
            Method::HdExplicitYq => "hd_explicit_yq",
            Method::HdImplicit => "hd_implicit",
            Method::Admm => "admm",
            Method::Pdhg => "pdhg",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.tag() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method {s:?}")))
    }
}

/// How much to evaluate per iteration.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monitor {
    /// Every trace column.
    #[default]
    Full,
    /// Primal objective and step norm only; used by step-size searches.
    Objective,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    /// Step size of the explicit and implicit discretizations.
    pub epsilon: f64,
    /// Primal scale of ADMM and PDHG.
    pub rho: f64,
    /// Dual scale of PDHG.
    pub sigma: f64,
    pub max_iters: usize,
    /// Stop once the full gap (or the field norm when conjugate values are
    /// unavailable) falls to this level. Zero disables early stopping.
    pub stop_tol: f64,
    /// Treat the run as diverged once the primal objective exceeds this value.
    pub divergence_threshold: f64,
    pub monitor: Monitor,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            rho: 1.0,
            sigma: 1.0,
            max_iters: 1000,
            stop_tol: 0.0,
            divergence_threshold: f64::INFINITY,
            monitor: Monitor::Full,
        }
    }
}

impl StepConfig {
    fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )))
            }
        };
        positive("epsilon", self.epsilon)?;
        positive("rho", self.rho)?;
        positive("sigma", self.sigma)?;
        if !(self.stop_tol >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "stop_tol must be nonnegative, got {}",
                self.stop_tol
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub k: usize,
    pub wall_seconds: f64,
    pub primal_obj: f64,
    pub dual_obj: Option<f64>,
    pub full_gap: Option<f64>,
    pub partial_gap: Option<f64>,
    pub hamiltonian: Option<f64>,
    pub grad_norm: Option<f64>,
    pub step_norm: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IterTrace {
    pub records: Vec<IterRecord>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl IterTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&IterRecord> {
        self.records.last()
    }

    pub fn primal_objs(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.primal_obj).collect()
    }

    pub fn hamiltonians(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.hamiltonian).collect()
    }

    /// CSV with the fixed header. Wall time can be blanked so that two runs
    /// of the same configuration produce identical bytes.
    pub fn write_csv<W: Write>(&self, mut w: W, with_wall_time: bool) -> io::Result<()> {
        writeln!(w, "{TRACE_HEADER}")?;
        for r in &self.records {
            let wall = if with_wall_time {
                r.wall_seconds.to_string()
            } else {
                String::new()
            };
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                r.k,
                wall,
                r.primal_obj,
                opt(r.dual_obj),
                opt(r.full_gap),
                opt(r.partial_gap),
                opt(r.hamiltonian),
                opt(r.grad_norm),
                r.step_norm
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self, with_wall_time: bool) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, with_wall_time)
            .expect("writing to memory");
        String::from_utf8(buf).expect("ascii")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    MaxIters,
    Converged { at_iter: usize },
    Diverged { at_iter: usize, reason: String },
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub trace: IterTrace,
    pub point: PrimalDualPoint,
    pub status: RunStatus,
}

/// Everything a trace row needs at one iterate, in the `(y, p)` pairing used
/// for objective values plus the method's own Hamiltonian coordinates.
struct Snapshot {
    y: DenseVector,
    p: DenseVector,
    ay: DenseVector,
    atp: DenseVector,
    /// The Hamiltonian's own `(x, q)` arguments.
    ham_x: DenseVector,
    ham_q: DenseVector,
    grad_norm: Option<f64>,
}

struct Recorder<'a> {
    problem: &'a CompositeProblem,
    cert: Option<&'a Certificate>,
    cfg: &'a StepConfig,
    has_conj_values: bool,
    start: Instant,
    trace: IterTrace,
}

enum Outcome {
    Continue,
    Stop(RunStatus),
}

impl<'a> Recorder<'a> {
    fn new(
        problem: &'a CompositeProblem,
        cert: Option<&'a Certificate>,
        cfg: &'a StepConfig,
    ) -> Self {
        let has_conj_values =
            problem.h().has(Capabilities::CONJ_VALUE) && problem.g().has(Capabilities::CONJ_VALUE);
        Self {
            problem,
            cert,
            cfg,
            has_conj_values,
            start: Instant::now(),
            trace: IterTrace::default(),
        }
    }

    fn record(&mut self, k: usize, snap: &Snapshot, step_norm: f64) -> Result<Outcome> {
        let problem = self.problem;
        let primal_obj = problem.h().value(&snap.ay)? + problem.g().value(&snap.y)?;
        let need_gap =
            self.cfg.monitor == Monitor::Full || (self.cfg.stop_tol > 0.0 && self.has_conj_values);
        let (dual_obj, full_gap) = if need_gap && self.has_conj_values {
            let neg_p = -&snap.p;
            let hc = problem.h().conj_value(&neg_p)?;
            let gc = problem.g().conj_value(&snap.atp)?;
            let dual = -hc - gc;
            let gap = crate::linalg::compensated_sum([primal_obj, hc, gc]);
            (Some(dual), Some(gap))
        } else {
            (None, None)
        };
        let (partial_gap, hamiltonian) = match (self.cert, self.cfg.monitor) {
            (Some(cert), Monitor::Full) => (
                Some(problem.partial_gap(cert, &snap.ay, &snap.atp)?),
                Some(problem.partial_gap(cert, &snap.ham_x, &snap.ham_q)?),
            ),
            _ => (None, None),
        };
        let grad_norm = if self.cfg.monitor == Monitor::Full || self.cfg.stop_tol > 0.0 {
            snap.grad_norm
        } else {
            None
        };
        self.trace.records.push(IterRecord {
            k,
            wall_seconds: self.start.elapsed().as_secs_f64(),
            primal_obj,
            dual_obj,
            full_gap,
            partial_gap,
            hamiltonian,
            grad_norm,
            step_norm,
        });
        if !primal_obj.is_finite() {
            return Ok(Outcome::Stop(RunStatus::Diverged {
                at_iter: k,
                reason: "non-finite objective".into(),
            }));
        }
        if primal_obj > self.cfg.divergence_threshold {
            return Ok(Outcome::Stop(RunStatus::Diverged {
                at_iter: k,
                reason: format!("objective {primal_obj:e} above threshold"),
            }));
        }
        if self.cfg.stop_tol > 0.0 {
            let measure = if self.has_conj_values {
                full_gap
            } else {
                grad_norm
            };
            if measure.is_some_and(|v| v <= self.cfg.stop_tol) {
                return Ok(Outcome::Stop(RunStatus::Converged { at_iter: k }));
            }
        }
        Ok(Outcome::Continue)
    }
}

/// Iterates `method` from `z0` for at most `cfg.max_iters` steps, recording one
/// trace row after each step. Non-finite iterates end the run with
/// [`RunStatus::Diverged`] and the trace so far; configuration and capability
/// problems are errors.
pub fn run(
    method: Method,
    problem: &CompositeProblem,
    z0: &PrimalDualPoint,
    cfg: &StepConfig,
    cert: Option<&Certificate>,
) -> Result<RunResult> {
    cfg.validate()?;
    match method {
        Method::HdExplicitXp => run_hd_xp(problem, z0, cfg, cert),
        Method::HdExplicitYq | Method::HdImplicit => run_hd_yq(method, problem, z0, cfg, cert),
        Method::Admm => run_admm(problem, z0, cfg, cert),
        Method::Pdhg => run_pdhg(problem, z0, cfg, cert),
    }
}

fn diverged_on_error(e: Error, k: usize) -> Result<RunStatus> {
    match e {
        Error::NonFinite(what) => Ok(RunStatus::Diverged {
            at_iter: k,
            reason: format!("non-finite {what}"),
        }),
        Error::NoConvergence { .. } | Error::ProxNewton { .. } => Ok(RunStatus::Diverged {
            at_iter: k,
            reason: e.to_string(),
        }),
        other => Err(other),
    }
}

/// Cached quantities of the `(y, q)` field at one state.
struct YqEval {
    ay: DenseVector,
    grad_h: DenseVector,
    /// `Aᵀ∇h(Ay)`
    back: DenseVector,
    field: DenseVector,
}

fn eval_yq(problem: &CompositeProblem, y: &DenseVector, q: &DenseVector) -> Result<YqEval> {
    let ay = problem.ax(y)?;
    let grad_h = problem.h().grad(&ay)?;
    let back = problem.atp(&grad_h)?;
    let conj = problem.g().conj_grad(q)?;
    let m = y.dim();
    let field = DenseVector::from_fn(2 * m, |i| {
        if i < m {
            conj[i] - y[i]
        } else {
            -back[i - m] - q[i - m]
        }
    });
    Ok(YqEval {
        ay,
        grad_h,
        back,
        field,
    })
}

fn yq_snapshot(y: &DenseVector, q: &DenseVector, e: &YqEval) -> Snapshot {
    Snapshot {
        y: y.clone(),
        p: -&e.grad_h,
        ay: e.ay.clone(),
        atp: -&e.back,
        ham_x: e.ay.clone(),
        ham_q: q.clone(),
        grad_norm: Some(e.field.norm()),
    }
}

fn run_hd_yq(
    method: Method,
    problem: &CompositeProblem,
    z0: &PrimalDualPoint,
    cfg: &StepConfig,
    cert: Option<&Certificate>,
) -> Result<RunResult> {
    let field = FlowField::new(problem, Space::Yq)?;
    let m = problem.m();
    let implicit = if method == Method::HdImplicit {
        Some(ImplicitStepper::new(field, cfg.epsilon)?)
    } else {
        None
    };
    let mut z = z0.y.concat(&z0.q);
    let mut rec = Recorder::new(problem, cert, cfg);
    let mut status = RunStatus::MaxIters;
    let mut current = if implicit.is_none() && cfg.max_iters > 0 {
        Some(eval_yq(problem, &z0.y, &z0.q)?)
    } else {
        None
    };
    for k in 1..=cfg.max_iters {
        let next = match &implicit {
            Some(stepper) => stepper.step(&z),
            None => {
                let f = &current.as_ref().expect("explicit state").field;
                let n = z.lincomb(1.0, f, cfg.epsilon);
                if n.is_finite() {
                    Ok(n)
                } else {
                    Err(Error::NonFinite("explicit step"))
                }
            }
        };
        let next = match next {
            Ok(n) => n,
            Err(e) => {
                status = diverged_on_error(e, k)?;
                break;
            }
        };
        let step_norm = next.dist(&z);
        z = next;
        let (y, q) = z.split(m);
        let e = eval_yq(problem, &y, &q)?;
        let outcome = rec.record(k, &yq_snapshot(&y, &q, &e), step_norm)?;
        current = Some(e);
        if let Outcome::Stop(s) = outcome {
            status = s;
            break;
        }
    }
    let (y, q) = z.split(m);
    let point = PrimalDualPoint::from_yq(problem, y, q)?;
    Ok(RunResult {
        trace: rec.trace,
        point,
        status,
    })
}

fn run_hd_xp(
    problem: &CompositeProblem,
    z0: &PrimalDualPoint,
    cfg: &StepConfig,
    cert: Option<&Certificate>,
) -> Result<RunResult> {
    let field = FlowField::new(problem, Space::Xp)?;
    let n = problem.n();
    let mut z = z0.x.concat(&z0.p);
    let mut rec = Recorder::new(problem, cert, cfg);
    let mut status = RunStatus::MaxIters;
    let mut f = if cfg.max_iters > 0 {
        field.eval(&z)?
    } else {
        DenseVector::zeros(0)
    };
    for k in 1..=cfg.max_iters {
        let next = z.lincomb(1.0, &f, cfg.epsilon);
        if !next.is_finite() {
            status = RunStatus::Diverged {
                at_iter: k,
                reason: "non-finite explicit step".into(),
            };
            break;
        }
        let step_norm = next.dist(&z);
        z = next;
        let (x, p) = z.split(n);
        let q = problem.atp(&p)?;
        let y = problem.g().conj_grad(&q)?;
        let ay = problem.ax(&y)?;
        let (dx, dp) = field_xp(problem, &x, &p)?;
        f = dx.concat(&dp);
        let snap = Snapshot {
            y,
            p,
            ay,
            atp: q.clone(),
            ham_x: x,
            ham_q: q,
            grad_norm: Some(f.norm()),
        };
        if let Outcome::Stop(s) = rec.record(k, &snap, step_norm)? {
            status = s;
            break;
        }
    }
    let (x, p) = z.split(n);
    let point = PrimalDualPoint::from_xp(problem, x, p)?;
    Ok(RunResult {
        trace: rec.trace,
        point,
        status,
    })
}

fn run_admm(
    problem: &CompositeProblem,
    z0: &PrimalDualPoint,
    cfg: &StepConfig,
    cert: Option<&Certificate>,
) -> Result<RunResult> {
    let admm = Admm::new(problem, cfg.rho)?;
    let mut state = AdmmState {
        x: z0.x.clone(),
        y: z0.y.clone(),
        p: z0.p.clone(),
    };
    let mut rec = Recorder::new(problem, cert, cfg);
    let mut status = RunStatus::MaxIters;
    for k in 1..=cfg.max_iters {
        let next = match admm.step(&state) {
            Ok(s) => s,
            Err(e) => {
                status = diverged_on_error(e, k)?;
                break;
            }
        };
        let step_norm = (next.x.dist(&state.x).powi(2)
            + next.y.dist(&state.y).powi(2)
            + next.p.dist(&state.p).powi(2))
        .sqrt();
        state = next;
        let ay = problem.ax(&state.y)?;
        let atp = problem.atp(&state.p)?;
        let grad_norm = if cfg.monitor == Monitor::Full || cfg.stop_tol > 0.0 {
            let (dx, dp) = field_xp(problem, &state.x, &state.p)?;
            Some((dx.norm_sq() + dp.norm_sq()).sqrt())
        } else {
            None
        };
        let snap = Snapshot {
            y: state.y.clone(),
            p: state.p.clone(),
            ay,
            atp: atp.clone(),
            ham_x: state.x.clone(),
            ham_q: atp,
            grad_norm,
        };
        if let Outcome::Stop(s) = rec.record(k, &snap, step_norm)? {
            status = s;
            break;
        }
    }
    let q = problem.atp(&state.p)?;
    let point = PrimalDualPoint::free(state.x, state.y, state.p, q);
    Ok(RunResult {
        trace: rec.trace,
        point,
        status,
    })
}

fn run_pdhg(
    problem: &CompositeProblem,
    z0: &PrimalDualPoint,
    cfg: &StepConfig,
    cert: Option<&Certificate>,
) -> Result<RunResult> {
    let pdhg = Pdhg::new(problem, cfg.rho, cfg.sigma)?;
    let mut state = PdhgState {
        y: z0.y.clone(),
        p: z0.p.clone(),
    };
    let mut rec = Recorder::new(problem, cert, cfg);
    let mut status = RunStatus::MaxIters;
    for k in 1..=cfg.max_iters {
        let next = match pdhg.step(&state) {
            Ok(s) => s,
            Err(e) => {
                status = diverged_on_error(e, k)?;
                break;
            }
        };
        let step_norm = (next.y.dist(&state.y).powi(2) + next.p.dist(&state.p).powi(2)).sqrt();
        state = next;
        let ay = problem.ax(&state.y)?;
        let atp = problem.atp(&state.p)?;
        let grad_norm = if cfg.monitor == Monitor::Full || cfg.stop_tol > 0.0 {
            let e = eval_yq(problem, &state.y, &atp)?;
            Some(e.field.norm())
        } else {
            None
        };
        let snap = Snapshot {
            y: state.y.clone(),
            p: state.p.clone(),
            ay: ay.clone(),
            atp: atp.clone(),
            ham_x: ay,
            ham_q: atp,
            grad_norm,
        };
        if let Outcome::Stop(s) = rec.record(k, &snap, step_norm)? {
            status = s;
            break;
        }
    }
    let x = problem.ax(&state.y)?;
    let q = problem.atp(&state.p)?;
    let point = PrimalDualPoint::free(x, state.y, state.p, q);
    Ok(RunResult {
        trace: rec.trace,
        point,
        status,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atoms::Atom;
    use crate::linalg::DenseMatrix;
    use crate::problem::{certify, CertifyMethod};

    fn toy() -> CompositeProblem {
        CompositeProblem::new(
            Atom::quadratic_residual(DenseVector::from([2.0, 2.0])),
            Atom::scaled_sqnorm(1.0, DenseMatrix::identity(2)).unwrap(),
            DenseMatrix::identity(2),
        )
        .unwrap()
    }

    fn origin(p: &CompositeProblem) -> PrimalDualPoint {
        let (n, m) = (p.n(), p.m());
        PrimalDualPoint::free(
            DenseVector::zeros(n),
            DenseVector::zeros(m),
            DenseVector::zeros(n),
            DenseVector::zeros(m),
        )
    }

    #[test]
    fn hd_explicit_yq_converges_on_toy() {
        let p = toy();
        let c = certify(&p, CertifyMethod::Auto).unwrap();
        let cfg = StepConfig {
            epsilon: 0.1,
            max_iters: 500,
            ..Default::default()
        };
        let r = run(Method::HdExplicitYq, &p, &origin(&p), &cfg, Some(&c)).unwrap();
        assert_eq!(r.trace.len(), 500);
        assert_eq!(r.status, RunStatus::MaxIters);
        assert!(r.trace.last().unwrap().partial_gap.unwrap() <= 1e-6);
    }

    #[test]
    fn zero_iterations_echo_start() {
        let p = toy();
        let z0 = PrimalDualPoint::from_yq(
            &p,
            DenseVector::from([0.3, 0.1]),
            DenseVector::from([1.0, -1.0]),
        )
        .unwrap();
        for method in Method::ALL {
            let cfg = StepConfig {
                max_iters: 0,
                ..Default::default()
            };
            let r = run(method, &p, &z0, &cfg, None).unwrap();
            assert!(r.trace.is_empty());
            if method == Method::HdExplicitXp {
                assert_eq!((&r.point.x, &r.point.p), (&z0.x, &z0.p));
            } else {
                assert_eq!(r.point.y, z0.y, "{method}");
            }
        }
    }

    #[test]
    fn admm_reaches_small_gap_on_toy() {
        let p = toy();
        let c = certify(&p, CertifyMethod::Auto).unwrap();
        let cfg = StepConfig {
            rho: 1.0,
            max_iters: 200,
            stop_tol: 1e-8,
            ..Default::default()
        };
        let r = run(Method::Admm, &p, &origin(&p), &cfg, Some(&c)).unwrap();
        assert!(
            matches!(r.status, RunStatus::Converged { .. }),
            "{:?}",
            r.status
        );
        assert!(r.trace.last().unwrap().full_gap.unwrap() <= 1e-8);
    }

    #[test]
    fn every_method_converges_on_toy() {
        let p = toy();
        let c = certify(&p, CertifyMethod::Auto).unwrap();
        for method in Method::ALL {
            let cfg = StepConfig {
                epsilon: 0.2,
                rho: 0.5,
                sigma: 0.5,
                max_iters: 2000,
                ..Default::default()
            };
            let r = run(method, &p, &origin(&p), &cfg, Some(&c)).unwrap();
            let last = r.trace.last().unwrap();
            assert!(last.full_gap.unwrap() < 1e-8, "{method}: {:?}", last);
            assert!(r.point.y.dist(&c.y_star) < 1e-4, "{method}");
        }
    }

    #[test]
    fn csv_has_fixed_header_and_blank_optional_columns() {
        let p = toy();
        let cfg = StepConfig {
            max_iters: 2,
            monitor: Monitor::Objective,
            ..Default::default()
        };
        let r = run(Method::HdExplicitYq, &p, &origin(&p), &cfg, None).unwrap();
        let csv = r.trace.to_csv_string(false);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(TRACE_HEADER));
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row.len(), 9);
        assert_eq!(row[0], "1");
        assert_eq!(row[1], "");
        assert_eq!(row[3], "");
        assert_eq!(row[6], "");
    }

    #[test]
    fn divergence_is_reported_not_raised() {
        let p = toy();
        let cfg = StepConfig {
            epsilon: 50.0,
            max_iters: 5000,
            ..Default::default()
        };
        let r = run(Method::HdExplicitYq, &p, &origin(&p), &cfg, None).unwrap();
        assert!(
            matches!(r.status, RunStatus::Diverged { .. }),
            "{:?}",
            r.status
        );
        assert!(r.trace.len() < 5000);
    }

    #[test]
    fn method_tags_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.tag().parse::<Method>().unwrap(), m);
        }
        assert!("newton".parse::<Method>().is_err());
    }
}
