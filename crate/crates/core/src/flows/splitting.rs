//! ADMM and PDHG as unit-step discretizations of the flow.

use crate::atoms::{soft_threshold, Atom, Capabilities, PreparedProx};
use crate::error::{Error, Result};
use crate::linalg::{Cholesky, DenseMatrix, DenseVector};
use crate::problem::CompositeProblem;

const CD_TOL: f64 = 1e-10;
const CD_MAX_SWEEPS: usize = 20_000;

#[derive(Clone, Debug, PartialEq)]
pub struct AdmmState {
    pub x: DenseVector,
    pub y: DenseVector,
    pub p: DenseVector,
}

impl AdmmState {
    /// Start from `(y, p)`; `x` is set to `Ay` and only matters for tracing.
    pub fn new(problem: &CompositeProblem, y: DenseVector, p: DenseVector) -> Result<Self> {
        Ok(Self {
            x: problem.ax(&y)?,
            y,
            p,
        })
    }
}

#[derive(Debug)]
enum CoupledSolver {
    /// `(ρAᵀA + C) y = rhs + shift`
    Linear {
        factor: Cholesky,
        shift: Option<DenseVector>,
    },
    /// `min ½yᵀQy − rhsᵀy + λ₁‖y‖₁` with `Q = ρAᵀA + λ₂I`, by coordinate descent.
    Shrinkage { quad: DenseMatrix, lambda1: f64 },
}

impl CoupledSolver {
    fn new(g: &Atom, gram: &DenseMatrix, rho: f64) -> Result<Self> {
        let scaled = gram.scaled(rho);
        match g {
            Atom::ScaledSqNorm(_) => {
                let s = scaled.add(g.curvature().expect("scaled_sqnorm"))?;
                Ok(CoupledSolver::Linear {
                    factor: Cholesky::factor(&s)?,
                    shift: None,
                })
            }
            Atom::QuadraticResidual { b } => Ok(CoupledSolver::Linear {
                factor: Cholesky::factor(&scaled.add_diag(1.0))?,
                shift: Some(b.clone()),
            }),
            Atom::Zero { .. } => Ok(CoupledSolver::Linear {
                factor: Cholesky::factor(&scaled)?,
                shift: None,
            }),
            Atom::ElasticNet {
                lambda1, lambda2, ..
            } => Ok(CoupledSolver::Shrinkage {
                quad: scaled.add_diag(*lambda2),
                lambda1: *lambda1,
            }),
            Atom::Logistic { .. } => Err(Error::InvalidParameter(
                "coupled resolvent is not available for a logistic regularizer".into(),
            )),
        }
    }

    fn solve(&self, rhs: &DenseVector, warm: Option<&DenseVector>) -> Result<DenseVector> {
        match self {
            CoupledSolver::Linear { factor, shift } => match shift {
                Some(b) => Ok(factor.solve(&(rhs + b))?),
                None => Ok(factor.solve(rhs)?),
            },
            CoupledSolver::Shrinkage { quad, lambda1 } => {
                let m = rhs.dim();
                let mut y = warm.cloned().unwrap_or_else(|| DenseVector::zeros(m));
                let mut qy = quad.matvec(&y)?;
                let mut change = f64::INFINITY;
                for _ in 0..CD_MAX_SWEEPS {
                    change = 0.0;
                    for i in 0..m {
                        let qii = quad[(i, i)];
                        let resid = rhs[i] - (qy[i] - qii * y[i]);
                        let new = soft_threshold(resid, *lambda1) / qii;
                        let delta = new - y[i];
                        if delta != 0.0 {
                            y[i] = new;
                            for (k, qk) in quad.row(i).iter().enumerate() {
                                qy[k] += delta * qk;
                            }
                            change = f64::max(change, delta.abs());
                        }
                    }
                    if change <= CD_TOL * y.norm_inf().max(1.0) {
                        return Ok(y);
                    }
                }
                Err(Error::NoConvergence {
                    what: "coupled shrinkage subproblem",
                    iters: CD_MAX_SWEEPS,
                    residual: change,
                })
            }
        }
    }
}

/// Solves `0 ∈ ∂g(y) + ρAᵀAy − rhs`, i.e. `y = (ρAᵀA + ∂g)^{-1} rhs`.
pub fn coupled_resolvent(
    g: &Atom,
    a: &DenseMatrix,
    rho: f64,
    rhs: &DenseVector,
) -> Result<DenseVector> {
    CoupledSolver::new(g, &a.gram(), rho)?.solve(rhs, None)
}

/// ADMM with the `y`-subproblem prepared once for a fixed `ρ`:
///
/// `x⁺ = (ρI + ∇h)^{-1}(ρAy − p)`,
/// `y⁺ = (ρAᵀA + ∂g)^{-1}Aᵀ(p + ρx⁺)`,
/// `p⁺ = p + ρ(x⁺ − Ay⁺)`.
#[derive(Debug)]
pub struct Admm<'a> {
    problem: &'a CompositeProblem,
    rho: f64,
    inner: CoupledSolver,
}

impl<'a> Admm<'a> {
    pub fn new(problem: &'a CompositeProblem, rho: f64) -> Result<Self> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "ADMM needs rho > 0, got {rho}"
            )));
        }
        if !problem.h().has(Capabilities::PROX) {
            return Err(Error::MissingCapability {
                atom: problem.h().kind(),
                capability: "prox",
            });
        }
        let inner = CoupledSolver::new(problem.g(), problem.gram(), rho)?;
        Ok(Self {
            problem,
            rho,
            inner,
        })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn step(&self, state: &AdmmState) -> Result<AdmmState> {
        let rho = self.rho;
        let ay = self.problem.ax(&state.y)?;
        let w = DenseVector::from_fn(ay.dim(), |i| rho * ay[i] - state.p[i]);
        let x = self.problem.h().grad_resolvent(rho, &w)?;
        let rhs = self.problem.atp(&state.p.lincomb(1.0, &x, rho))?;
        let y = self.inner.solve(&rhs, Some(&state.y))?;
        let ay_new = self.problem.ax(&y)?;
        let p = DenseVector::from_fn(x.dim(), |i| state.p[i] + rho * (x[i] - ay_new[i]));
        let next = AdmmState { x, y, p };
        if !(next.x.is_finite() && next.y.is_finite() && next.p.is_finite()) {
            return Err(Error::NonFinite("ADMM step"));
        }
        Ok(next)
    }
}

/// One ADMM step; see [`Admm`].
pub fn admm_step(problem: &CompositeProblem, state: &AdmmState, rho: f64) -> Result<AdmmState> {
    Admm::new(problem, rho)?.step(state)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PdhgState {
    pub y: DenseVector,
    pub p: DenseVector,
}

/// PDHG in the sign convention where `p` approximates `−∇h(Ay)`:
///
/// `p⁺ = −(I + ρ∂h*)^{-1}(ρAy − p)`,
/// `y⁺ = (I + σ∂g)^{-1}(σAᵀp⁺ + y)`.
///
/// The `h*` resolvent comes from the prox of `h` via the Moreau identity.
#[derive(Debug)]
pub struct Pdhg<'a> {
    problem: &'a CompositeProblem,
    rho: f64,
    sigma: f64,
    g_prox: PreparedProx<'a>,
}

impl<'a> Pdhg<'a> {
    pub fn new(problem: &'a CompositeProblem, rho: f64, sigma: f64) -> Result<Self> {
        if !(rho > 0.0 && sigma > 0.0) || !(rho.is_finite() && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "PDHG needs rho, sigma > 0, got {rho}, {sigma}"
            )));
        }
        if !problem.h().has(Capabilities::PROX) {
            return Err(Error::MissingCapability {
                atom: problem.h().kind(),
                capability: "prox",
            });
        }
        let g_prox = problem.g().prepare_prox(sigma)?;
        Ok(Self {
            problem,
            rho,
            sigma,
            g_prox,
        })
    }

    pub fn step(&self, state: &PdhgState) -> Result<PdhgState> {
        let (rho, sigma) = (self.rho, self.sigma);
        let ay = self.problem.ax(&state.y)?;
        let w = DenseVector::from_fn(ay.dim(), |i| rho * ay[i] - state.p[i]);
        let p = -&self.problem.h().conj_prox(rho, &w)?;
        let atp = self.problem.atp(&p)?;
        let y = self.g_prox.apply(&state.y.lincomb(1.0, &atp, sigma))?;
        if !(p.is_finite() && y.is_finite()) {
            return Err(Error::NonFinite("PDHG step"));
        }
        Ok(PdhgState { y, p })
    }
}

/// One PDHG step; see [`Pdhg`].
pub fn pdhg_step(
    problem: &CompositeProblem,
    state: &PdhgState,
    rho: f64,
    sigma: f64,
) -> Result<PdhgState> {
    Pdhg::new(problem, rho, sigma)?.step(state)
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

    #[test]
    fn admm_one_step_on_toy_by_hand() {
        // ρ = 1 from zeros: x⁺ = (0 + b)/2 = (1,1); y⁺ = (I + I)^{-1}(0 + x⁺) = (½,½);
        // p⁺ = 0 + (x⁺ − y⁺) = (½,½).
        let p = toy([2.0, 2.0]);
        let s0 = AdmmState::new(&p, DenseVector::zeros(2), DenseVector::zeros(2)).unwrap();
        let s1 = admm_step(&p, &s0, 1.0).unwrap();
        for i in 0..2 {
            assert!((s1.x[i] - 1.0).abs() < 1e-15);
            assert!((s1.y[i] - 0.5).abs() < 1e-15);
            assert!((s1.p[i] - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn admm_fixed_point_at_optimum() {
        let p = toy([2.0, -3.0]);
        let c = certify(&p, CertifyMethod::Auto).unwrap();
        let s = AdmmState {
            x: c.x_star.clone(),
            y: c.y_star.clone(),
            p: c.p_star.clone(),
        };
        let n = admm_step(&p, &s, 0.7).unwrap();
        assert!(n.y.dist(&s.y) < 1e-14 && n.p.dist(&s.p) < 1e-14 && n.x.dist(&s.x) < 1e-14);
    }

    #[test]
    fn pdhg_one_step_on_toy_by_hand() {
        let p = toy([2.0, 2.0]);
        let s0 = PdhgState {
            y: DenseVector::zeros(2),
            p: DenseVector::zeros(2),
        };
        let s1 = pdhg_step(&p, &s0, 0.5, 0.5).unwrap();
        for i in 0..2 {
            assert!((s1.p[i] - 2.0 / 3.0).abs() < 1e-15);
            assert!((s1.y[i] - 2.0 / 9.0).abs() < 1e-15);
        }
    }

    #[test]
    fn pdhg_fixed_point_at_optimum() {
        let p = toy([2.0, 2.0]);
        let c = certify(&p, CertifyMethod::Auto).unwrap();
        let s = PdhgState {
            y: c.y_star.clone(),
            p: c.p_star.clone(),
        };
        let n = pdhg_step(&p, &s, 0.5, 0.5).unwrap();
        assert!(n.y.dist(&s.y) < 1e-15 && n.p.dist(&s.p) < 1e-15);
    }

    #[test]
    fn shrinkage_resolvent_satisfies_inclusion() {
        let mut rng = Rng::new(12);
        let a = rng.normal_matrix(6, 4, 1.0);
        let g = Atom::elastic_net(0.5, 0.3, 4).unwrap();
        let rhs = rng.normal_vector(4).scaled(3.0);
        let rho = 2.0;
        let y = coupled_resolvent(&g, &a, rho, &rhs).unwrap();
        // rhs − ρAᵀAy − λ₂y must lie in λ₁∂‖y‖₁.
        let r = &(&rhs - &a.gram().scaled(rho).matvec(&y).unwrap()) - &y.scaled(0.3);
        for i in 0..4 {
            if y[i] == 0.0 {
                assert!(r[i].abs() <= 0.5 + 1e-9);
            } else {
                assert!(
                    (r[i] - 0.5 * y[i].signum()).abs() <= 1e-8,
                    "i={i} r={}",
                    r[i]
                );
            }
        }
    }

    #[test]
    fn admm_rejects_bad_rho() {
        let p = toy([1.0, 1.0]);
        assert!(Admm::new(&p, 0.0).is_err());
        assert!(Pdhg::new(&p, 1.0, -1.0).is_err());
    }
}
