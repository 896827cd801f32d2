//! Hamiltonian-descent vector fields and their discretizations.
//!
//! In `(y, q)` coordinates the flow is
//! `ẏ = ∇g*(q) − y`, `q̇ = −Aᵀ∇h(Ay) − q`, and in `(x, p)` coordinates
//! `ẋ = A∇g*(Aᵀp) − x`, `ṗ = −∇h(x) − p`. Neither form references the optimal
//! point; the skew coupling lives entirely in the sign pattern above.

mod runner;
mod splitting;

pub use runner::{
    run, IterRecord, IterTrace, Method, Monitor, RunResult, RunStatus, StepConfig, TRACE_HEADER,
};
pub use splitting::{admm_step, coupled_resolvent, pdhg_step, Admm, AdmmState, Pdhg, PdhgState};

use crate::atoms::Capabilities;
use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, DenseVector, Lu};
use crate::problem::{Certificate, CompositeProblem};

const FIXED_POINT_RELAXATION: f64 = 0.5;
const FIXED_POINT_TOL: f64 = 1e-12;
const FIXED_POINT_MAX_ITERS: usize = 500;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Space {
    /// State `z = (x, p) ∈ ℝ²ⁿ`.
    Xp,
    /// State `z = (y, q) ∈ ℝ²ᵐ`.
    Yq,
}

#[derive(Clone, Copy, Debug)]
pub struct FlowField<'a> {
    problem: &'a CompositeProblem,
    space: Space,
}

impl<'a> FlowField<'a> {
    pub fn new(problem: &'a CompositeProblem, space: Space) -> Result<Self> {
        if !problem.h().has(Capabilities::GRAD) {
            return Err(Error::MissingCapability {
                atom: problem.h().kind(),
                capability: "grad",
            });
        }
        if !problem.g().has(Capabilities::CONJ_GRAD) {
            return Err(Error::MissingCapability {
                atom: problem.g().kind(),
                capability: "conj_grad",
            });
        }
        Ok(Self { problem, space })
    }

    pub fn problem(&self) -> &'a CompositeProblem {
        self.problem
    }

    pub fn space(&self) -> Space {
        self.space
    }

    /// Dimension of one half of the state.
    pub fn half_dim(&self) -> usize {
        match self.space {
            Space::Xp => self.problem.n(),
            Space::Yq => self.problem.m(),
        }
    }

    pub fn dim(&self) -> usize {
        2 * self.half_dim()
    }

    pub fn join(&self, first: &DenseVector, second: &DenseVector) -> DenseVector {
        first.concat(second)
    }

    pub fn split(&self, z: &DenseVector) -> (DenseVector, DenseVector) {
        z.split(self.half_dim())
    }

    fn check(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "state has dim {}, field expects {}",
                z.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Field value at `z`.
    pub fn eval(&self, z: &DenseVector) -> Result<DenseVector> {
        self.check(z)?;
        let (u, v) = self.split(z);
        let (du, dv) = match self.space {
            Space::Xp => field_xp(self.problem, &u, &v)?,
            Space::Yq => field_yq(self.problem, &u, &v)?,
        };
        Ok(du.concat(&dv))
    }

    /// The Hamiltonian this flow descends.
    pub fn hamiltonian(&self, cert: &Certificate, z: &DenseVector) -> Result<f64> {
        self.check(z)?;
        let (u, v) = self.split(z);
        match self.space {
            Space::Xp => self.problem.hamiltonian_xp(cert, &u, &v),
            Space::Yq => self.problem.hamiltonian_yq(cert, &u, &v),
        }
    }

    pub fn hamiltonian_grad(&self, cert: &Certificate, z: &DenseVector) -> Result<DenseVector> {
        self.check(z)?;
        let (u, v) = self.split(z);
        let (gu, gv) = match self.space {
            Space::Xp => self.problem.hamiltonian_xp_grad(cert, &u, &v)?,
            Space::Yq => self.problem.hamiltonian_yq_grad(cert, &u, &v)?,
        };
        Ok(gu.concat(&gv))
    }

    /// The optimal point in this field's coordinates.
    pub fn optimum(&self, cert: &Certificate) -> DenseVector {
        match self.space {
            Space::Xp => cert.x_star.concat(&cert.p_star),
            Space::Yq => cert.y_star.concat(&cert.q_star),
        }
    }

    /// True when the field is affine in `z`, so implicit steps reduce to one
    /// linear solve.
    pub fn is_affine(&self) -> bool {
        self.problem.h().has_affine_grad() && self.problem.g().has_affine_conj_grad()
    }

    /// Jacobian `∂F/∂z` and offset `F(0)` of an affine field, column by column.
    pub fn affine_parts(&self) -> Result<(DenseMatrix, DenseVector)> {
        if !self.is_affine() {
            return Err(Error::InvalidParameter(format!(
                "field is not affine for {} + {}",
                self.problem.h().kind(),
                self.problem.g().kind()
            )));
        }
        let d = self.dim();
        let offset = self.eval(&DenseVector::zeros(d))?;
        let mut jac = DenseMatrix::zeros(d, d);
        for j in 0..d {
            let mut e = DenseVector::zeros(d);
            e[j] = 1.0;
            let col = self.eval(&e)?;
            for i in 0..d {
                jac[(i, j)] = col[i] - offset[i];
            }
        }
        Ok((jac, offset))
    }
}

/// `(dx, dp) = (A∇g*(Aᵀp) − x, −∇h(x) − p)`
pub fn field_xp(
    problem: &CompositeProblem,
    x: &[f64],
    p: &[f64],
) -> Result<(DenseVector, DenseVector)> {
    let y = problem.g().conj_grad(&problem.atp(p)?)?;
    let ay = problem.ax(&y)?;
    let dx = DenseVector::from_fn(x.len(), |i| ay[i] - x[i]);
    let gh = problem.h().grad(x)?;
    let dp = DenseVector::from_fn(p.len(), |i| -gh[i] - p[i]);
    Ok((dx, dp))
}

/// `(dy, dq) = (∇g*(q) − y, −Aᵀ∇h(Ay) − q)`
pub fn field_yq(
    problem: &CompositeProblem,
    y: &[f64],
    q: &[f64],
) -> Result<(DenseVector, DenseVector)> {
    let gq = problem.g().conj_grad(q)?;
    let dy = DenseVector::from_fn(y.len(), |i| gq[i] - y[i]);
    let back = problem.atp(&problem.h().grad(&problem.ax(y)?)?)?;
    let dq = DenseVector::from_fn(q.len(), |i| -back[i] - q[i]);
    Ok((dy, dq))
}

/// `z' = z + ε F(z)`
pub fn explicit_step(field: &FlowField<'_>, z: &DenseVector, epsilon: f64) -> Result<DenseVector> {
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "step size must be nonnegative, got {epsilon}"
        )));
    }
    let f = field.eval(z)?;
    let next = z.lincomb(1.0, &f, epsilon);
    if !next.is_finite() {
        return Err(Error::NonFinite("explicit step"));
    }
    Ok(next)
}

/// `z' = z + ε F(z')`, solved once per call. For repeated steps at a fixed `ε`
/// use [`ImplicitStepper`], which factors the linear system only once.
pub fn implicit_step(field: &FlowField<'_>, z: &DenseVector, epsilon: f64) -> Result<DenseVector> {
    ImplicitStepper::new(*field, epsilon)?.step(z)
}

#[derive(Debug)]
enum ImplicitSolver {
    Identity,
    /// `(I − εJ) z' = z + ε c`
    Linear {
        lu: Lu,
        offset: DenseVector,
    },
    FixedPoint,
}

/// Implicit steps at a fixed step size. Affine fields are handled with one LU
/// factorization of `I − ε ∂F/∂z`; other fields use a damped fixed-point
/// iteration, which only converges when `ε` is small relative to the field's
/// Lipschitz constant.
#[derive(Debug)]
pub struct ImplicitStepper<'a> {
    field: FlowField<'a>,
    epsilon: f64,
    solver: ImplicitSolver,
}

impl<'a> ImplicitStepper<'a> {
    pub fn new(field: FlowField<'a>, epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "step size must be nonnegative, got {epsilon}"
            )));
        }
        let solver = if epsilon == 0.0 {
            ImplicitSolver::Identity
        } else if field.is_affine() {
            let (jac, offset) = field.affine_parts()?;
            let system = DenseMatrix::identity(field.dim()).add(&jac.scaled(-epsilon))?;
            ImplicitSolver::Linear {
                lu: Lu::factor(&system)?,
                offset,
            }
        } else {
            ImplicitSolver::FixedPoint
        };
        Ok(Self {
            field,
            epsilon,
            solver,
        })
    }

    pub fn field(&self) -> &FlowField<'a> {
        &self.field
    }

    pub fn step(&self, z: &DenseVector) -> Result<DenseVector> {
        let eps = self.epsilon;
        let next = match &self.solver {
            ImplicitSolver::Identity => z.clone(),
            ImplicitSolver::Linear { lu, offset } => lu.solve(&z.lincomb(1.0, offset, eps))?,
            ImplicitSolver::FixedPoint => {
                let mut w = z.clone();
                let mut change = f64::INFINITY;
                let mut converged = false;
                for _ in 0..FIXED_POINT_MAX_ITERS {
                    let target = z.lincomb(1.0, &self.field.eval(&w)?, eps);
                    let next = w.lincomb(
                        1.0 - FIXED_POINT_RELAXATION,
                        &target,
                        FIXED_POINT_RELAXATION,
                    );
                    change = next.dist(&w);
                    w = next;
                    if !change.is_finite() {
                        break;
                    }
                    if change <= FIXED_POINT_TOL * w.norm().max(1.0) {
                        converged = true;
                        break;
                    }
                }
                if !converged {
                    return Err(Error::NoConvergence {
                        what: "implicit step fixed-point iteration",
                        iters: FIXED_POINT_MAX_ITERS,
                        residual: change,
                    });
                }
                w
            }
        };
        if !next.is_finite() {
            return Err(Error::NonFinite("implicit step"));
        }
        Ok(next)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atoms::Atom;
    use crate::problem::{certify, CertifyMethod};
    use crate::rng::Rng;

    fn scalar_toy() -> CompositeProblem {
        CompositeProblem::new(
            Atom::quadratic_residual(DenseVector::zeros(1)),
            Atom::scaled_sqnorm(1.0, DenseMatrix::identity(1)).unwrap(),
            DenseMatrix::identity(1),
        )
        .unwrap()
    }

    fn random_quadratic(rng: &mut Rng, n: usize, m: usize) -> CompositeProblem {
        CompositeProblem::new(
            Atom::quadratic_residual(rng.normal_vector(n)),
            Atom::scaled_sqnorm(
                rng.uniform(0.2, 2.0),
                rng.normal_matrix(m, m, 1.0).add_diag(2.0),
            )
            .unwrap(),
            rng.normal_matrix(n, m, 1.0),
        )
        .unwrap()
    }

    #[test]
    fn scalar_toy_fields() {
        let p = scalar_toy();
        let (dx, dp) = field_xp(&p, &[1.0], &[0.0]).unwrap();
        assert_eq!((dx[0], dp[0]), (-1.0, -1.0));
        let (dy, dq) = field_yq(&p, &[1.0], &[0.0]).unwrap();
        assert_eq!((dy[0], dq[0]), (-1.0, -1.0));
    }

    #[test]
    fn field_vanishes_at_optimum() {
        let mut rng = Rng::new(1);
        let p = random_quadratic(&mut rng, 6, 4);
        let c = certify(&p, CertifyMethod::Auto).unwrap();
        for space in [Space::Xp, Space::Yq] {
            let f = FlowField::new(&p, space).unwrap();
            assert!(f.eval(&f.optimum(&c)).unwrap().norm() < 1e-12);
        }
    }

    #[test]
    fn xp_momentum_field_ignores_regularizer() {
        // dp = −∇h(x) − p involves neither g nor any optimal point.
        let mut rng = Rng::new(2);
        let p1 = random_quadratic(&mut rng, 5, 5);
        let p2 = p1
            .with_atoms(p1.h().clone(), Atom::elastic_net(0.3, 2.0, 5).unwrap())
            .unwrap();
        let x = rng.normal_vector(5);
        let pv = rng.normal_vector(5);
        assert_eq!(
            field_xp(&p1, &x, &pv).unwrap().1,
            field_xp(&p2, &x, &pv).unwrap().1
        );
    }

    #[test]
    fn explicit_step_on_scalar_toy() {
        let p = scalar_toy();
        let c = certify(&p, CertifyMethod::Auto).unwrap();
        let f = FlowField::new(&p, Space::Xp).unwrap();
        let z0 = DenseVector::from([1.0, 0.0]);
        let z1 = explicit_step(&f, &z0, 0.1).unwrap();
        assert!((z1[0] - 0.9).abs() < 1e-15 && (z1[1] + 0.1).abs() < 1e-15);
        assert!((f.hamiltonian(&c, &z0).unwrap() - 0.5).abs() < 1e-15);
        assert!((f.hamiltonian(&c, &z1).unwrap() - 0.41).abs() < 1e-15);
        assert_eq!(explicit_step(&f, &z0, 0.0).unwrap(), z0);
        let star = f.optimum(&c);
        assert_eq!(explicit_step(&f, &star, 0.3).unwrap(), star);
    }

    #[test]
    fn implicit_step_on_scalar_toy_matches_hand_solve() {
        // (1+ε)x' − εp' = x and εx' + (1+ε)p' = p.
        let p = scalar_toy();
        let f = FlowField::new(&p, Space::Xp).unwrap();
        let eps = 0.7;
        let z = DenseVector::from([1.0, -0.4]);
        let zn = implicit_step(&f, &z, eps).unwrap();
        let det = (1.0 + eps) * (1.0 + eps) + eps * eps;
        let x = ((1.0 + eps) * z[0] + eps * z[1]) / det;
        let pp = ((1.0 + eps) * z[1] - eps * z[0]) / det;
        assert!((zn[0] - x).abs() < 1e-15 && (zn[1] - pp).abs() < 1e-15);
        assert_eq!(implicit_step(&f, &z, 0.0).unwrap(), z);
    }

    #[test]
    fn implicit_step_contracts_hamiltonian_for_large_steps() {
        let mut rng = Rng::new(3);
        let p = random_quadratic(&mut rng, 7, 7);
        let c = certify(&p, CertifyMethod::Auto).unwrap();
        let f = FlowField::new(&p, Space::Yq).unwrap();
        let stepper = ImplicitStepper::new(f, 10.0).unwrap();
        let mut z = rng.normal_vector(14);
        let mut h = f.hamiltonian(&c, &z).unwrap();
        for _ in 0..5 {
            z = stepper.step(&z).unwrap();
            let hn = f.hamiltonian(&c, &z).unwrap();
            assert!(hn <= h / 11.0 + 1e-10, "{hn} vs {h}");
            h = hn;
        }
    }

    #[test]
    fn implicit_fixed_point_solves_nonlinear_field() {
        let mut rng = Rng::new(4);
        let (n, m) = (12, 5);
        let labels = DenseVector::from_fn(n, |i| if i % 2 == 0 { 1.0 } else { -1.0 });
        let p = CompositeProblem::new(
            Atom::logistic_mean(labels).unwrap(),
            Atom::elastic_net(0.01, 1.0, m).unwrap(),
            rng.normal_matrix(n, m, 0.5),
        )
        .unwrap();
        let f = FlowField::new(&p, Space::Yq).unwrap();
        let z = rng.normal_vector(2 * m);
        let eps = 0.2;
        let zn = implicit_step(&f, &z, eps).unwrap();
        let back = z.lincomb(1.0, &f.eval(&zn).unwrap(), eps);
        assert!(back.dist(&zn) < 1e-10);
        // Far too large a step for the damped iteration.
        assert!(matches!(
            implicit_step(&f, &z, 1e4),
            Err(Error::NoConvergence { .. })
        ));
    }
}
