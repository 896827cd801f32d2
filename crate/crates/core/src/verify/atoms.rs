//! Checks on single atoms: derivatives, conjugates and proximal maps.

use crate::atoms::{Atom, Capabilities};
use crate::error::Result;
use crate::flows::{FlowField, Space};
use crate::linalg::DenseVector;
use crate::problem::{Certificate, CompositeProblem};
use crate::rng::Rng;

use super::instances::{certified, random_logistic_elastic_net, random_quadratic};
use super::{
    merge, CheckReport, Worst, CONJ_INVERSE_TOL, EN_CONJ_GRID_HALF_WIDTH, EN_CONJ_GRID_POINTS,
    EN_CONJ_GRID_TOL, FD_REL_TOL, FD_STEP, FENCHEL_YOUNG_TOL, PROX_OPTIMALITY_TOL,
};

const DIM: usize = 5;
const POINTS: usize = 100;

/// `‖fd − grad‖∞ / max(1, ‖grad‖∞)` with central differences.
fn fd_violation(
    f: impl Fn(&DenseVector) -> Result<f64>,
    grad: &DenseVector,
    x: &DenseVector,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    let mut e = x.clone();
    for i in 0..x.dim() {
        e[i] = x[i] + FD_STEP;
        let up = f(&e)?;
        e[i] = x[i] - FD_STEP;
        let down = f(&e)?;
        e[i] = x[i];
        let fd = (up - down) / (2.0 * FD_STEP);
        worst = worst.max((fd - grad[i]).abs());
    }
    Ok(worst / grad.norm_inf().max(1.0))
}

pub fn fd_grad_check(atom: &Atom, points: &[DenseVector]) -> Result<CheckReport> {
    let mut w = Worst::default();
    if atom.has(Capabilities::GRAD) {
        for x in points {
            w.push(fd_violation(|z| atom.value(z), &atom.grad(x)?, x)?);
        }
    }
    Ok(w.report(&format!("fd_grad[{}]", atom.kind()), FD_REL_TOL))
}

pub fn fd_conj_grad_check(atom: &Atom, points: &[DenseVector]) -> Result<CheckReport> {
    let mut w = Worst::default();
    if atom.has(Capabilities::CONJ_GRAD | Capabilities::CONJ_VALUE) {
        for v in points {
            w.push(fd_violation(
                |z| atom.conj_value(z),
                &atom.conj_grad(v)?,
                v,
            )?);
        }
    }
    Ok(w.report(&format!("fd_conj_grad[{}]", atom.kind()), FD_REL_TOL))
}

/// Finite differences of the Hamiltonian against its analytic gradient.
pub fn fd_hamiltonian_check(
    problem: &CompositeProblem,
    cert: &Certificate,
    space: Space,
    points: &[DenseVector],
) -> Result<CheckReport> {
    let field = FlowField::new(problem, space)?;
    let mut w = Worst::default();
    for z in points {
        w.push(fd_violation(
            |u| field.hamiltonian(cert, u),
            &field.hamiltonian_grad(cert, z)?,
            z,
        )?);
    }
    Ok(w.report("fd_hamiltonian", FD_REL_TOL))
}

/// Compares the closed-form elastic-net conjugate
/// `(|v| − λ₁)₊² / (2λ₂)` with a brute-force supremum of
/// `vy − λ₁|y| − (λ₂/2)y²` over a uniform grid on `[−50, 50]`.
pub fn elastic_net_conjugate_check(
    lambda1: f64,
    lambda2: f64,
    values: &[f64],
) -> Result<CheckReport> {
    let atom = Atom::elastic_net(lambda1, lambda2, 1)?;
    let spacing = 2.0 * EN_CONJ_GRID_HALF_WIDTH / (EN_CONJ_GRID_POINTS - 1) as f64;
    let mut w = Worst::default();
    for &v in values {
        let mut best = f64::NEG_INFINITY;
        for j in 0..EN_CONJ_GRID_POINTS {
            let y = -EN_CONJ_GRID_HALF_WIDTH + j as f64 * spacing;
            best = best.max(v * y - lambda1 * y.abs() - 0.5 * lambda2 * y * y);
        }
        w.push((atom.conj_value(&[v])? - best).abs());
    }
    Ok(w.report("elastic_net_conjugate", EN_CONJ_GRID_TOL))
}

/// An element of `∂f(u)`: the gradient, or for the elastic net
/// `λ₁ sign(u) + λ₂u`.
fn subgradient(atom: &Atom, u: &DenseVector) -> Result<Option<DenseVector>> {
    if atom.has(Capabilities::GRAD) {
        return Ok(Some(atom.grad(u)?));
    }
    Ok(match atom {
        Atom::ElasticNet {
            lambda1, lambda2, ..
        } => Some(u.map(|t| if t == 0.0 { 0.0 } else { lambda1 * t.signum() } + lambda2 * t)),
        _ => None,
    })
}

/// `f(u) + f*(v) ≥ uᵀv` on the given pairs, and equality at `v ∈ ∂f(u)`.
/// Violations are scaled by `1 + |uᵀv|`.
pub fn fenchel_young_check(
    atom: &Atom,
    pairs: &[(DenseVector, DenseVector)],
) -> Result<CheckReport> {
    let mut w = Worst::default();
    if !atom.has(Capabilities::CONJ_VALUE) {
        return Ok(w.report(
            &format!("fenchel_young[{}]", atom.kind()),
            FENCHEL_YOUNG_TOL,
        ));
    }
    for (u, v) in pairs {
        let inner = u.dot(v);
        let slack = atom.value(u)? + atom.conj_value(v)? - inner;
        w.push((-slack).max(0.0) / (1.0 + inner.abs()));
        if let Some(s) = subgradient(atom, u)? {
            let inner = u.dot(&s);
            let slack = atom.value(u)? + atom.conj_value(&s)? - inner;
            w.bump(slack.abs() / (1.0 + inner.abs()));
        }
    }
    Ok(w.report(
        &format!("fenchel_young[{}]", atom.kind()),
        FENCHEL_YOUNG_TOL,
    ))
}

/// `∇f*(s) = u` for `s ∈ ∂f(u)`, scaled by `1 + ‖u‖∞`.
pub fn conjugate_inverse_check(atom: &Atom, points: &[DenseVector]) -> Result<CheckReport> {
    let mut w = Worst::default();
    if atom.has(Capabilities::CONJ_GRAD) {
        for u in points {
            if let Some(s) = subgradient(atom, u)? {
                w.push(atom.conj_grad(&s)?.dist(u) / (1.0 + u.norm_inf()));
            }
        }
    }
    Ok(w.report(
        &format!("conjugate_inverse[{}]", atom.kind()),
        CONJ_INVERSE_TOL,
    ))
}

/// `(v − prox(v))/ρ ∈ ∂f(prox(v))`, coordinatewise, scaled by `1 + ‖v‖∞`.
/// For the elastic net the zero coordinates need `|rᵢ| ≤ λ₁`.
pub fn prox_optimality_check(atom: &Atom, rho: f64, points: &[DenseVector]) -> Result<CheckReport> {
    let mut w = Worst::default();
    for v in points {
        let u = atom.prox(rho, v)?;
        let r = DenseVector::from_fn(v.dim(), |i| (v[i] - u[i]) / rho);
        let scale = 1.0 + v.norm_inf();
        let violation = match atom {
            Atom::ElasticNet {
                lambda1, lambda2, ..
            } => (0..u.dim())
                .map(|i| {
                    if u[i] == 0.0 {
                        (r[i].abs() - lambda1).max(0.0)
                    } else {
                        (r[i] - lambda1 * u[i].signum() - lambda2 * u[i]).abs()
                    }
                })
                .fold(0.0, f64::max),
            Atom::Zero { .. } => r.norm_inf(),
            _ => (&r - &atom.grad(&u)?).norm_inf(),
        };
        w.push(violation / scale);
    }
    Ok(w.report(
        &format!("prox_optimality[{}]", atom.kind()),
        PROX_OPTIMALITY_TOL,
    ))
}

/// One atom of each kind on `ℝ⁵`.
pub(crate) fn sample_atoms(rng: &mut Rng) -> Result<Vec<Atom>> {
    let labels = DenseVector::from_fn(DIM, |_| if rng.bernoulli(0.5) { 1.0 } else { -1.0 });
    let b = rng.normal_matrix(DIM, DIM, 0.3).add_diag(1.0);
    Ok(vec![
        Atom::zero(DIM),
        Atom::quadratic_residual(rng.normal_vector(DIM)),
        Atom::scaled_sqnorm(rng.uniform(0.2, 2.0), b)?,
        Atom::logistic(labels, 0.7)?,
        Atom::elastic_net(0.3, 0.5, DIM)?,
    ])
}

fn sample_points(rng: &mut Rng, count: usize, dim: usize, half_width: f64) -> Vec<DenseVector> {
    (0..count)
        .map(|_| rng.uniform_vector(dim, -half_width, half_width))
        .collect()
}

pub(crate) fn default_fd_grad(seed: u64) -> Result<CheckReport> {
    let mut rng = Rng::new(seed).fork(1);
    let atoms = sample_atoms(&mut rng)?;
    let points = sample_points(&mut rng, POINTS, DIM, 3.0);
    let reports = atoms
        .iter()
        .map(|a| fd_grad_check(a, &points))
        .collect::<Result<Vec<_>>>()?;
    Ok(merge("fd_grad", reports, FD_REL_TOL))
}

pub(crate) fn default_fd_conj_grad(seed: u64) -> Result<CheckReport> {
    let mut rng = Rng::new(seed).fork(2);
    let atoms = sample_atoms(&mut rng)?;
    let points = sample_points(&mut rng, POINTS, DIM, 3.0);
    let reports = atoms
        .iter()
        .map(|a| fd_conj_grad_check(a, &points))
        .collect::<Result<Vec<_>>>()?;
    Ok(merge("fd_conj_grad", reports, FD_REL_TOL))
}

pub(crate) fn default_fd_hamiltonian(seed: u64) -> Result<CheckReport> {
    let mut rng = Rng::new(seed).fork(3);
    let mut reports = Vec::new();
    for problem in [
        random_quadratic(&mut rng, 6, 4, false)?,
        random_logistic_elastic_net(&mut rng, 6, 4)?,
    ] {
        let (problem, cert) = certified(problem)?;
        for space in [Space::Xp, Space::Yq] {
            let half = if space == Space::Xp {
                problem.n()
            } else {
                problem.m()
            };
            let center = FlowField::new(&problem, space)?.optimum(&cert);
            let points: Vec<_> = (0..POINTS)
                .map(|_| &center + &rng.uniform_vector(2 * half, -3.0, 3.0))
                .collect();
            reports.push(fd_hamiltonian_check(&problem, &cert, space, &points)?);
        }
    }
    Ok(merge("fd_hamiltonian", reports, FD_REL_TOL))
}

pub(crate) fn default_elastic_net_conjugate(seed: u64) -> Result<CheckReport> {
    let mut rng = Rng::new(seed).fork(4);
    let mut reports = Vec::new();
    for (l1, l2) in [(1.0, 1.0), (0.3, 0.5), (2.0, 0.2)] {
        let mut values: Vec<f64> = (0..100).map(|_| rng.uniform(-5.0, 5.0)).collect();
        values.extend([0.0, l1, -l1]);
        reports.push(elastic_net_conjugate_check(l1, l2, &values)?);
    }
    Ok(merge("elastic_net_conjugate", reports, EN_CONJ_GRID_TOL))
}

pub(crate) fn default_fenchel_young(seed: u64) -> Result<CheckReport> {
    let mut rng = Rng::new(seed).fork(5);
    let atoms = sample_atoms(&mut rng)?;
    let mut reports = Vec::new();
    for atom in &atoms {
        let pairs: Vec<_> = (0..POINTS)
            .map(|_| {
                let u = rng.uniform_vector(DIM, -3.0, 3.0);
                let v = match atom {
                    // Mostly inside the conjugate's domain, which is where the
                    // inequality has content.
                    Atom::Logistic { labels, scale } => {
                        DenseVector::from_fn(DIM, |i| scale * labels[i] * rng.uniform(0.0, 1.0))
                    }
                    _ => rng.uniform_vector(DIM, -3.0, 3.0),
                };
                (u, v)
            })
            .collect();
        reports.push(fenchel_young_check(atom, &pairs)?);
    }
    Ok(merge("fenchel_young", reports, FENCHEL_YOUNG_TOL))
}

pub(crate) fn default_conjugate_inverse(seed: u64) -> Result<CheckReport> {
    let mut rng = Rng::new(seed).fork(6);
    let atoms = sample_atoms(&mut rng)?;
    let points = sample_points(&mut rng, POINTS, DIM, 3.0);
    let reports = atoms
        .iter()
        .map(|a| conjugate_inverse_check(a, &points))
        .collect::<Result<Vec<_>>>()?;
    Ok(merge("conjugate_inverse", reports, CONJ_INVERSE_TOL))
}

pub(crate) fn default_prox_optimality(seed: u64) -> Result<CheckReport> {
    let mut rng = Rng::new(seed).fork(7);
    let atoms = sample_atoms(&mut rng)?;
    let points = sample_points(&mut rng, POINTS, DIM, 10.0);
    let mut reports = Vec::new();
    for atom in &atoms {
        for rho in [0.1, 1.0, 10.0] {
            reports.push(prox_optimality_check(atom, rho, &points)?);
        }
    }
    Ok(merge("prox_optimality", reports, PROX_OPTIMALITY_TOL))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_fd_is_exact_to_rounding() {
        let atom = Atom::quadratic_residual(DenseVector::from([1.0, -2.0]));
        let x = DenseVector::from([0.3, 0.7]);
        let v = fd_violation(|z| atom.value(z), &atom.grad(&x).unwrap(), &x).unwrap();
        assert!(v < 1e-9, "{v}");
    }

    #[test]
    fn logistic_gradient_at_zero() {
        let atom = Atom::logistic(DenseVector::from([1.0, -1.0]), 0.8).unwrap();
        let g = atom.grad(&[0.0, 0.0]).unwrap();
        assert_eq!(g.as_slice(), &[0.4, -0.4]);
        let r = fd_grad_check(&atom, &[DenseVector::zeros(2)]).unwrap();
        assert!(r.pass, "{r}");
    }

    #[test]
    fn brute_force_conjugate_matches_closed_form() {
        let r = elastic_net_conjugate_check(1.0, 1.0, &[2.0, 0.5, -3.0, 0.0]).unwrap();
        assert!(r.pass, "{r}");
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let atom = Atom::quadratic_residual(DenseVector::from([1.0]));
        let x = DenseVector::from([2.0]);
        let v = fd_violation(|z| atom.value(z), &DenseVector::from([2.0]), &x).unwrap();
        assert!(v > 0.1);
    }

    #[test]
    fn default_atom_checks_pass() {
        for check in [
            default_fd_grad,
            default_fd_conj_grad,
            default_fd_hamiltonian,
            default_elastic_net_conjugate,
            default_fenchel_young,
            default_conjugate_inverse,
            default_prox_optimality,
        ] {
            let r = check(42).unwrap();
            assert!(r.pass && r.instances_run > 0, "{r}");
        }
    }
}
