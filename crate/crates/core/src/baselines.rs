//! First-order comparison methods on the primal problem `f(y) = h(Ay) + g(y)`:
//! gradient descent, proximal gradient, accelerated proximal gradient with
//! function-value restart, and conjugate gradient for quadratic instances.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::atoms::{Atom, Capabilities, PreparedProx};
use crate::error::{Error, Result};
use crate::flows::{IterRecord, IterTrace, Monitor, RunResult, RunStatus};
use crate::linalg::{dot_compensated, DenseMatrix, DenseVector};
use crate::problem::{Certificate, CompositeProblem, PrimalDualPoint};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    Gd,
    Pgd,
    Rag,
}

impl Baseline {
    pub const ALL: [Baseline; 3] = [Baseline::Gd, Baseline::Pgd, Baseline::Rag];

    pub fn tag(self) -> &'static str {
        match self {
            Baseline::Gd => "gd",
            Baseline::Pgd => "pgd",
            Baseline::Rag => "rag",
        }
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Baseline {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Baseline::ALL
            .into_iter()
            .find(|m| m.tag() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown baseline {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub step: f64,
    pub max_iters: usize,
    /// Function-value restart for the accelerated method.
    pub restart: bool,
    pub monitor: Monitor,
    pub divergence_threshold: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            step: 0.1,
            max_iters: 1000,
            restart: true,
            monitor: Monitor::Full,
            divergence_threshold: f64::INFINITY,
        }
    }
}

/// Value and gradient of the smooth part `h(Ay)`, sharing the product `Ay`.
fn smooth_value_grad(
    problem: &CompositeProblem,
    y: &[f64],
) -> Result<(f64, DenseVector, DenseVector)> {
    let ay = problem.ax(y)?;
    let gh = problem.h().grad(&ay)?;
    let value = problem.h().value(&ay)?;
    Ok((value, problem.atp(&gh)?, gh))
}

/// Objective and gradients at one iterate, shared between the step and the
/// trace row.
struct Eval {
    value: f64,
    /// `∇h(Ay)`
    gh: DenseVector,
    /// `Aᵀ∇h(Ay)`
    smooth_grad: DenseVector,
    g_grad: Option<DenseVector>,
}

impl Eval {
    fn at(problem: &CompositeProblem, y: &[f64], with_g_grad: bool) -> Result<Self> {
        let (hval, smooth_grad, gh) = smooth_value_grad(problem, y)?;
        let (gval, g_grad) = if with_g_grad {
            let (v, g) = g_value_grad(problem.g(), y)?;
            (v, Some(g))
        } else {
            (problem.g().value(y)?, None)
        };
        Ok(Self {
            value: hval + gval,
            gh,
            smooth_grad,
            g_grad,
        })
    }
}

/// `g(y)` and `∇g(y)`; a scaled squared norm gets its value from the
/// gradient, `g(y) = ½yᵀ∇g(y)`.
fn g_value_grad(g: &Atom, y: &[f64]) -> Result<(f64, DenseVector)> {
    let grad = g.grad(y)?;
    let value = match g {
        Atom::ScaledSqNorm(_) => 0.5 * dot_compensated(y, &grad),
        _ => g.value(y)?,
    };
    Ok((value, grad))
}

/// `y⁺ = y − step·(Aᵀ∇h(Ay) + ∇g(y))`
pub fn gd_step(problem: &CompositeProblem, y: &DenseVector, step: f64) -> Result<DenseVector> {
    if !problem.g().has(Capabilities::GRAD) {
        return Err(Error::InvalidParameter(format!(
            "gradient descent needs a differentiable g, {} is not; use pgd_step",
            problem.g().kind()
        )));
    }
    let (_, gs, _) = smooth_value_grad(problem, y)?;
    let gg = problem.g().grad(y)?;
    Ok(DenseVector::from_fn(y.dim(), |i| {
        y[i] - step * (gs[i] + gg[i])
    }))
}

/// `y⁺ = prox_{step·g}(y − step·Aᵀ∇h(Ay))`
pub fn pgd_step(problem: &CompositeProblem, y: &DenseVector, step: f64) -> Result<DenseVector> {
    let (_, gs, _) = smooth_value_grad(problem, y)?;
    problem.g().prox(step, &y.lincomb(1.0, &gs, -step))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RagState {
    pub y: DenseVector,
    pub y_prev: DenseVector,
    /// Momentum sequence `t_k` with `t_0 = 1`.
    pub t: f64,
    /// `f(y)`.
    pub f: f64,
    pub restarts: usize,
}

impl RagState {
    pub fn new(problem: &CompositeProblem, y0: DenseVector) -> Result<Self> {
        let f = problem.primal_value(&y0)?;
        Ok(Self {
            y_prev: y0.clone(),
            y: y0,
            t: 1.0,
            f,
            restarts: 0,
        })
    }
}

/// One accelerated proximal gradient step with function-value restart: if the
/// objective would increase, the momentum is reset and a plain proximal
/// gradient step is taken from the current point instead.
pub fn rag_step(state: &RagState, problem: &CompositeProblem, step: f64) -> Result<RagState> {
    let prox = problem.g().prepare_prox(step)?;
    rag_step_prepared(state, problem, step, &prox, true)
}

fn prox_grad_from(
    problem: &CompositeProblem,
    w: &DenseVector,
    step: f64,
    prox: &PreparedProx<'_>,
) -> Result<DenseVector> {
    let (_, gs, _) = smooth_value_grad(problem, w)?;
    prox.apply(&w.lincomb(1.0, &gs, -step))
}

fn rag_step_prepared(
    state: &RagState,
    problem: &CompositeProblem,
    step: f64,
    prox: &PreparedProx<'_>,
    restart: bool,
) -> Result<RagState> {
    let t_next = 0.5 * (1.0 + (1.0 + 4.0 * state.t * state.t).sqrt());
    let beta = (state.t - 1.0) / t_next;
    let w = state.y.lincomb(1.0 + beta, &state.y_prev, -beta);
    let y = prox_grad_from(problem, &w, step, prox)?;
    let f = problem.primal_value(&y)?;
    if restart && f > state.f && beta != 0.0 {
        let y = prox_grad_from(problem, &state.y, step, prox)?;
        let f = problem.primal_value(&y)?;
        return Ok(RagState {
            y_prev: state.y.clone(),
            y,
            t: 1.0,
            f,
            restarts: state.restarts + 1,
        });
    }
    Ok(RagState {
        y_prev: state.y.clone(),
        y,
        t: t_next,
        f,
        restarts: state.restarts,
    })
}

/// Runs a baseline from `y0`, recording one row per iteration. The dual
/// quantities use `p = −∇h(Ay)`; there is no Hamiltonian column.
pub fn run_baseline(
    method: Baseline,
    problem: &CompositeProblem,
    y0: &DenseVector,
    cfg: &BaselineConfig,
    cert: Option<&Certificate>,
) -> Result<RunResult> {
    if !(cfg.step > 0.0) || !cfg.step.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "step must be positive, got {}",
            cfg.step
        )));
    }
    if method == Baseline::Gd && !problem.g().has(Capabilities::GRAD) {
        return Err(Error::InvalidParameter(format!(
            "gradient descent needs a differentiable g, {} is not; use pgd",
            problem.g().kind()
        )));
    }
    let prox = if method == Baseline::Gd {
        None
    } else {
        Some(problem.g().prepare_prox(cfg.step)?)
    };
    let start = Instant::now();
    let mut trace = IterTrace::default();
    let mut status = RunStatus::MaxIters;
    let mut rag = RagState::new(problem, y0.clone())?;
    let mut y = y0.clone();
    let has_conj =
        problem.h().has(Capabilities::CONJ_VALUE) && problem.g().has(Capabilities::CONJ_VALUE);
    let with_g_grad = method == Baseline::Gd;
    // RAG evaluates its own extrapolated points; the iterate itself is only
    // needed for the full trace columns.
    let eval_iterates = method != Baseline::Rag || cfg.monitor == Monitor::Full;

    let mut eval = if method == Baseline::Rag {
        None
    } else {
        Some(Eval::at(problem, &y, with_g_grad)?)
    };
    for k in 1..=cfg.max_iters {
        let next = match method {
            Baseline::Gd => {
                let e = eval.as_ref().expect("evaluated");
                let gg = e.g_grad.as_ref().expect("gradient of g");
                DenseVector::from_fn(y.dim(), |i| y[i] - cfg.step * (e.smooth_grad[i] + gg[i]))
            }
            Baseline::Pgd => {
                let e = eval.as_ref().expect("evaluated");
                prox.as_ref()
                    .expect("prox")
                    .apply(&y.lincomb(1.0, &e.smooth_grad, -cfg.step))?
            }
            Baseline::Rag => {
                rag = rag_step_prepared(
                    &rag,
                    problem,
                    cfg.step,
                    prox.as_ref().expect("prox"),
                    cfg.restart,
                )?;
                rag.y.clone()
            }
        };
        if !next.is_finite() {
            status = RunStatus::Diverged {
                at_iter: k,
                reason: "non-finite iterate".into(),
            };
            break;
        }
        let step_norm = next.dist(&y);
        y = next;
        let primal_obj = if eval_iterates {
            let e = Eval::at(problem, &y, with_g_grad)?;
            let v = e.value;
            eval = Some(e);
            v
        } else {
            rag.f
        };

        let mut row = IterRecord {
            k,
            wall_seconds: start.elapsed().as_secs_f64(),
            primal_obj,
            dual_obj: None,
            full_gap: None,
            partial_gap: None,
            hamiltonian: None,
            grad_norm: None,
            step_norm,
        };
        if cfg.monitor == Monitor::Full {
            let e = eval.as_ref().expect("evaluated");
            let p = -&e.gh;
            let q = -&e.smooth_grad;
            if has_conj {
                let hc = problem.h().conj_value(&e.gh)?;
                let gc = problem.g().conj_value(&q)?;
                row.dual_obj = Some(-hc - gc);
                row.full_gap = Some(crate::linalg::compensated_sum([primal_obj, hc, gc]));
            }
            if let Some(c) = cert {
                row.partial_gap =
                    Some(problem.partial_gap(c, &problem.ax(&y)?, &problem.atp(&p)?)?);
            }
            let mapped = match &prox {
                Some(px) => px.apply(&y.lincomb(1.0, &e.smooth_grad, -cfg.step))?,
                None => {
                    let gg = e.g_grad.as_ref().expect("gradient of g");
                    DenseVector::from_fn(y.dim(), |i| y[i] - cfg.step * (e.smooth_grad[i] + gg[i]))
                }
            };
            row.grad_norm = Some(mapped.dist(&y) / cfg.step);
        }
        trace.records.push(row);
        if !primal_obj.is_finite() {
            status = RunStatus::Diverged {
                at_iter: k,
                reason: "non-finite objective".into(),
            };
            break;
        }
        if primal_obj > cfg.divergence_threshold {
            status = RunStatus::Diverged {
                at_iter: k,
                reason: format!("objective {primal_obj:e} above threshold"),
            };
            break;
        }
    }
    let x = problem.ax(&y)?;
    let p = -&problem.h().grad(&x)?;
    let q = problem.atp(&p)?;
    Ok(RunResult {
        trace,
        point: PrimalDualPoint::free(x, y, p, q),
        status,
    })
}

#[derive(Clone, Debug)]
pub struct CgResult {
    /// `y_1, y_2, …` (the zero start is not included).
    pub iterates: Vec<DenseVector>,
    /// Stopped early on nonpositive curvature.
    pub breakdown: bool,
    /// Stopped early because the residual reached rounding level.
    pub converged: bool,
}

/// Conjugate gradient on `S y = b` from `y = 0`.
pub fn cg_solve(s: &DenseMatrix, b: &DenseVector, iters: usize) -> Result<CgResult> {
    if !s.is_square() || s.rows() != b.dim() {
        return Err(Error::Dimension(format!(
            "CG needs square S matching b, got {}x{} and {}",
            s.rows(),
            s.cols(),
            b.dim()
        )));
    }
    let mut y = DenseVector::zeros(b.dim());
    let mut r = b.clone();
    let mut d = r.clone();
    let mut rr = r.norm_sq();
    // Residuals this small are rounding noise; iterating further only wanders.
    let floor = (f64::EPSILON * b.norm()).powi(2);
    let mut out = CgResult {
        iterates: Vec::new(),
        breakdown: false,
        converged: false,
    };
    if rr == 0.0 {
        out.converged = true;
        return Ok(out);
    }
    for _ in 0..iters {
        let sd = s.matvec(&d)?;
        let curv = d.dot(&sd);
        if !(curv > 0.0) {
            out.breakdown = true;
            break;
        }
        let alpha = rr / curv;
        y.axpy(alpha, &d);
        r.axpy(-alpha, &sd);
        out.iterates.push(y.clone());
        let rr_next = r.norm_sq();
        if rr_next <= floor {
            out.converged = true;
            break;
        }
        let beta = rr_next / rr;
        d = r.lincomb(1.0, &d, beta);
        rr = rr_next;
    }
    Ok(out)
}

/// CG on the normal equations `(AᵀA + λBᵀB) y = Aᵀb` of a regularized least
/// squares problem, traced like the other baselines.
pub fn run_cg(
    problem: &CompositeProblem,
    iters: usize,
    cert: Option<&Certificate>,
) -> Result<RunResult> {
    let Atom::QuadraticResidual { b } = problem.h() else {
        return Err(Error::InvalidParameter(
            "CG baseline needs a quadratic_residual h".into(),
        ));
    };
    let Some(curvature) = problem.g().curvature() else {
        return Err(Error::InvalidParameter(
            "CG baseline needs a scaled_sqnorm g".into(),
        ));
    };
    let s = problem.gram().add(curvature)?;
    let rhs = problem.atp(b)?;
    let start = Instant::now();
    let cg = cg_solve(&s, &rhs, iters)?;
    let mut trace = IterTrace::default();
    let mut prev = DenseVector::zeros(problem.m());
    for (i, y) in cg.iterates.iter().enumerate() {
        let x = problem.ax(y)?;
        let p = -&problem.h().grad(&x)?;
        let q = problem.atp(&p)?;
        let primal_obj = problem.h().value(&x)? + problem.g().value(y)?;
        let full_gap = problem.full_gap(y, &p)?;
        trace.records.push(IterRecord {
            k: i + 1,
            wall_seconds: start.elapsed().as_secs_f64(),
            primal_obj,
            dual_obj: Some(primal_obj - full_gap),
            full_gap: Some(full_gap),
            partial_gap: cert.map(|c| problem.partial_gap(c, &x, &q)).transpose()?,
            hamiltonian: None,
            grad_norm: Some((&s.matvec(y)? - &rhs).norm()),
            step_norm: y.dist(&prev),
        });
        prev = y.clone();
    }
    let status = if cg.converged {
        RunStatus::Converged {
            at_iter: cg.iterates.len(),
        }
    } else if cg.breakdown {
        RunStatus::Diverged {
            at_iter: cg.iterates.len() + 1,
            reason: "CG breakdown".into(),
        }
    } else {
        RunStatus::MaxIters
    };
    let x = problem.ax(&prev)?;
    let p = -&problem.h().grad(&x)?;
    let q = problem.atp(&p)?;
    Ok(RunResult {
        trace,
        point: PrimalDualPoint::free(x, prev, p, q),
        status,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{certify, CertifyMethod};
    use crate::rng::Rng;

    fn toy(b: [f64; 2]) -> CompositeProblem {
        CompositeProblem::new(
            Atom::quadratic_residual(DenseVector::from(b)),
            Atom::scaled_sqnorm(1.0, DenseMatrix::identity(2)).unwrap(),
            DenseMatrix::identity(2),
        )
        .unwrap()
    }

    fn lasso_toy() -> CompositeProblem {
        CompositeProblem::new(
            Atom::quadratic_residual(DenseVector::from([3.0, -0.5])),
            Atom::elastic_net(1.0, 1.0, 2).unwrap(),
            DenseMatrix::identity(2),
        )
        .unwrap()
    }

    #[test]
    fn gd_step_examples() {
        let p = toy([2.0, 2.0]);
        let y = gd_step(&p, &DenseVector::zeros(2), 0.1).unwrap();
        assert!((y[0] - 0.2).abs() < 1e-15 && (y[1] - 0.2).abs() < 1e-15);
        let c = certify(&p, CertifyMethod::Auto).unwrap();
        assert!(gd_step(&p, &c.y_star, 0.3).unwrap().dist(&c.y_star) < 1e-15);
        let y0 = DenseVector::from([0.4, -1.0]);
        assert_eq!(gd_step(&p, &y0, 0.0).unwrap(), y0);
    }

    #[test]
    fn gd_refuses_nonsmooth_regularizer() {
        let e = gd_step(&lasso_toy(), &DenseVector::zeros(2), 0.1).unwrap_err();
        assert!(e.to_string().contains("pgd"), "{e}");
    }

    #[test]
    fn pgd_step_on_lasso_toy_by_hand() {
        // From 0 with step ½: gradient step gives ½b = (1.5, −0.25);
        // prox shrinks by ½ and divides by 1.5: (2/3, 0).
        let p = lasso_toy();
        let y = pgd_step(&p, &DenseVector::zeros(2), 0.5).unwrap();
        assert!((y[0] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(y[1], 0.0);
        let y0 = DenseVector::from([0.4, -1.0]);
        assert_eq!(pgd_step(&p, &y0, 0.0).unwrap(), y0);
    }

    #[test]
    fn pgd_fixed_point_at_optimum() {
        let p = lasso_toy();
        // Optimum: y = soft(b, 1)/2 = (1, 0).
        let y = DenseVector::from([1.0, 0.0]);
        assert!(pgd_step(&p, &y, 0.7).unwrap().dist(&y) < 1e-15);
    }

    #[test]
    fn rag_first_step_equals_pgd() {
        let p = lasso_toy();
        let s0 = RagState::new(&p, DenseVector::from([0.2, 0.3])).unwrap();
        let s1 = rag_step(&s0, &p, 0.4).unwrap();
        assert_eq!(s1.y, pgd_step(&p, &s0.y, 0.4).unwrap());
    }

    #[test]
    fn rag_objective_is_monotone_with_restart() {
        let mut rng = Rng::new(9);
        let a = rng.normal_matrix(30, 20, 1.0);
        let p = CompositeProblem::new(
            Atom::quadratic_residual(rng.normal_vector(30)),
            Atom::elastic_net(0.1, 0.01, 20).unwrap(),
            a.clone(),
        )
        .unwrap();
        let step = 1.0 / a.norm2_estimate().powi(2);
        let mut s = RagState::new(&p, DenseVector::zeros(20)).unwrap();
        for _ in 0..300 {
            let n = rag_step(&s, &p, step).unwrap();
            assert!(n.f <= s.f + 1e-12, "{} > {}", n.f, s.f);
            s = n;
        }
        assert!(s.restarts > 0);
    }

    #[test]
    fn cg_examples() {
        let s = DenseMatrix::diag(&[1.0, 2.0, 5.0, 5.0]);
        let b = DenseVector::from([1.0, 1.0, 1.0, 1.0]);
        let r = cg_solve(&s, &b, 10).unwrap();
        assert!(r.iterates.len() <= 3);
        let y = r.iterates.last().unwrap();
        assert!((&s.matvec(y).unwrap() - &b).norm() < 1e-10);
        let zero = cg_solve(&s, &DenseVector::zeros(4), 10).unwrap();
        assert!(zero.iterates.is_empty() && zero.converged);
    }

    #[test]
    fn cg_first_step_is_exact_line_search() {
        let mut rng = Rng::new(1);
        let g = rng.normal_matrix(6, 6, 1.0);
        let s = g.gram().add_diag(0.5);
        let b = rng.normal_vector(6);
        let y1 = &cg_solve(&s, &b, 1).unwrap().iterates[0];
        let alpha = b.norm_sq() / b.dot(&s.matvec(&b).unwrap());
        assert!(y1.dist(&b.scaled(alpha)) < 1e-14);
    }

    #[test]
    fn cg_breakdown_flagged() {
        let s = DenseMatrix::diag(&[1.0, -1.0]);
        let r = cg_solve(&s, &DenseVector::from([1.0, 1.0]), 5).unwrap();
        assert!(r.breakdown);
    }

    #[test]
    fn pgd_run_converges_to_optimality() {
        let p = lasso_toy();
        let cfg = BaselineConfig {
            step: 0.5,
            max_iters: 200,
            ..Default::default()
        };
        let r = run_baseline(Baseline::Pgd, &p, &DenseVector::zeros(2), &cfg, None).unwrap();
        let res = p.optimality_residuals(&r.point).unwrap();
        assert!(res.iter().all(|&v| v <= 1e-8), "{res:?}");
    }

    #[test]
    fn baseline_tags_round_trip() {
        for b in Baseline::ALL {
            assert_eq!(b.tag().parse::<Baseline>().unwrap(), b);
        }
    }
}
