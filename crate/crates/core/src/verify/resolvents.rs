//! The generalized Moreau decomposition
//! `x = (I + ρA∂fAᵀ)^{-1}x + ρA(∂f* + ρAᵀA)^{-1}Aᵀx`
//! with both resolvents computed exactly: linear solves for quadratic `f`,
//! enumeration of sign patterns for the elastic net.

use crate::atoms::Atom;
use crate::error::{Error, Result};
use crate::linalg::{lstsq_min_norm, solve_general, solve_spd, Cholesky, DenseMatrix, DenseVector};
use crate::rng::Rng;

use super::{CheckReport, Worst, MOREAU_TOL, SINGLE_VALUED_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MoreauAtom {
    Quadratic,
    ElasticNet,
}

/// All sign patterns in `{−1, 0, 1}^m`.
fn sign_patterns(m: usize) -> impl Iterator<Item = Vec<f64>> {
    (0..3usize.pow(m as u32)).map(move |mut code| {
        (0..m)
            .map(|_| {
                let s = (code % 3) as f64 - 1.0;
                code /= 3;
                s
            })
            .collect()
    })
}

/// Builds and solves the linear system of each sign pattern, keeping the
/// solution whose pattern is least violated.
fn best_pattern(
    m: usize,
    system: impl Fn(&[f64]) -> (DenseMatrix, DenseVector),
    violation: impl Fn(&[f64], &DenseVector) -> f64,
) -> Result<DenseVector> {
    let mut best: Option<(f64, DenseVector)> = None;
    for sigma in sign_patterns(m) {
        let (k, rhs) = system(&sigma);
        let Ok(sol) = solve_general(&k, &rhs) else {
            continue;
        };
        if !sol.is_finite() {
            continue;
        }
        let v = violation(&sigma, &sol);
        if best.as_ref().is_none_or(|(bv, _)| v < *bv) {
            best = Some((v, sol));
        }
    }
    best.map(|(_, s)| s)
        .ok_or(Error::Empty("no solvable sign pattern"))
}

/// `u = (I + ρA∂fAᵀ)^{-1}x`.
fn primal_resolvent(f: &Atom, a: &DenseMatrix, rho: f64, x: &DenseVector) -> Result<DenseVector> {
    let at = a.transpose();
    match f {
        Atom::QuadraticResidual { b } => {
            // (I + ρAAᵀ)u = x + ρAb
            let s = at.gram().scaled(rho).add_diag(1.0);
            let rhs = x.lincomb(1.0, &a.matvec(b)?, rho);
            Ok(solve_spd(&s, &rhs)?)
        }
        Atom::ScaledSqNorm(_) => {
            // (I + ρACAᵀ)u = x
            let c = f.curvature().expect("scaled_sqnorm");
            let s = a.matmul(c)?.matmul(&at)?.scaled(rho).add_diag(1.0);
            Ok(solve_spd(&s, x)?)
        }
        Atom::ElasticNet {
            lambda1, lambda2, ..
        } => {
            // u = x − ρAs with s ∈ ∂f(Aᵀu); unknowns s.
            let (l1, l2) = (*lambda1, *lambda2);
            let m = a.cols();
            let g = a.gram();
            let c = at.matvec(x)?;
            let s = best_pattern(
                m,
                |sigma| {
                    let k = DenseMatrix::from_fn(m, m, |i, j| {
                        if sigma[i] != 0.0 {
                            (i == j) as u8 as f64 + rho * l2 * g[(i, j)]
                        } else {
                            rho * g[(i, j)]
                        }
                    });
                    let rhs = DenseVector::from_fn(m, |i| {
                        if sigma[i] != 0.0 {
                            l1 * sigma[i] + l2 * c[i]
                        } else {
                            c[i]
                        }
                    });
                    (k, rhs)
                },
                |sigma, s| {
                    let z = c.lincomb(1.0, &g.matvec(s).expect("square"), -rho);
                    (0..m)
                        .map(|i| {
                            if sigma[i] != 0.0 {
                                (-sigma[i] * z[i]).max(0.0)
                            } else {
                                (s[i].abs() - l1).max(0.0)
                            }
                        })
                        .fold(0.0, f64::max)
                },
            )?;
            Ok(x.lincomb(1.0, &a.matvec(&s)?, -rho))
        }
        _ => Err(Error::InvalidParameter(format!(
            "no exact resolvent for {}",
            f.kind()
        ))),
    }
}

/// `w = (∂f* + ρAᵀA)^{-1}Aᵀx`.
fn dual_resolvent(f: &Atom, a: &DenseMatrix, rho: f64, x: &DenseVector) -> Result<DenseVector> {
    let g = a.gram();
    let c = a.tmatvec(x)?;
    match f {
        Atom::QuadraticResidual { b } => {
            // ∇f*(w) = w + b
            Ok(solve_spd(&g.scaled(rho).add_diag(1.0), &(&c - b))?)
        }
        Atom::ScaledSqNorm(_) => {
            // ∇f*(w) = C^{-1}w
            let c_inv = Cholesky::factor(f.curvature().expect("scaled_sqnorm"))?.inverse();
            Ok(solve_spd(&c_inv.add(&g.scaled(rho))?, &c)?)
        }
        Atom::ElasticNet {
            lambda1, lambda2, ..
        } => {
            // ∇f*(w)ᵢ = (wᵢ − λ₁σᵢ)/λ₂ where |wᵢ| > λ₁, else 0.
            let (l1, l2) = (*lambda1, *lambda2);
            let m = a.cols();
            best_pattern(
                m,
                |sigma| {
                    let k = DenseMatrix::from_fn(m, m, |i, j| {
                        rho * g[(i, j)] + if i == j { sigma[i].abs() / l2 } else { 0.0 }
                    });
                    let rhs = DenseVector::from_fn(m, |i| c[i] + l1 * sigma[i] / l2);
                    (k, rhs)
                },
                |sigma, w| {
                    (0..m)
                        .map(|i| {
                            if sigma[i] != 0.0 {
                                (l1 - sigma[i] * w[i]).max(0.0)
                            } else {
                                (w[i].abs() - l1).max(0.0)
                            }
                        })
                        .fold(0.0, f64::max)
                },
            )
        }
        _ => Err(Error::InvalidParameter(format!(
            "no exact resolvent for {}",
            f.kind()
        ))),
    }
}

/// `‖x − u − ρAw‖ / (1 + ‖x‖)` for the two resolvents `u`, `w`.
pub fn moreau_residual(f: &Atom, a: &DenseMatrix, rho: f64, x: &DenseVector) -> Result<f64> {
    if f.dim() != a.cols() || x.dim() != a.rows() {
        return Err(Error::Dimension(format!(
            "f on ℝ^{} and x in ℝ^{} need A of shape {}x{}, got {}x{}",
            f.dim(),
            x.dim(),
            x.dim(),
            f.dim(),
            a.rows(),
            a.cols()
        )));
    }
    let u = primal_resolvent(f, a, rho, x)?;
    let w = dual_resolvent(f, a, rho, x)?;
    let aw = a.matvec(&w)?;
    let r = DenseVector::from_fn(x.dim(), |i| x[i] - u[i] - rho * aw[i]);
    Ok(r.norm() / (1.0 + x.norm()))
}

pub fn moreau_check(
    f: &Atom,
    a: &DenseMatrix,
    rho: f64,
    points: &[DenseVector],
) -> Result<CheckReport> {
    let mut w = Worst::default();
    for x in points {
        w.push(moreau_residual(f, a, rho, x)?);
    }
    Ok(w.report("moreau", MOREAU_TOL))
}

/// Jacobian of `∇f*` at `w` (a generalized one at the elastic net's kinks).
fn conj_grad_jacobian(f: &Atom, w: &DenseVector) -> Result<DenseMatrix> {
    Ok(match f {
        Atom::QuadraticResidual { b } => DenseMatrix::identity(b.dim()),
        Atom::ScaledSqNorm(_) => Cholesky::factor(f.curvature().expect("scaled_sqnorm"))?.inverse(),
        Atom::ElasticNet {
            lambda1, lambda2, ..
        } => DenseMatrix::diag(&w.map(|t| {
            if t.abs() > *lambda1 {
                1.0 / lambda2
            } else {
                0.0
            }
        })),
        _ => {
            return Err(Error::InvalidParameter(format!(
                "no conjugate Jacobian for {}",
                f.kind()
            )))
        }
    })
}

const INNER_MAX_ITERS: usize = 200_000;
const INNER_TOL: f64 = 1e-11;
const POLISH_STEPS: usize = 8;

/// Solves `∇f*(w) + ρAᵀAw = Aᵀx` from `w0` by minimizing
/// `f*(w) + (ρ/2)‖Aw‖² − xᵀAw` with restarted accelerated gradient, then
/// polishes with minimum-norm Newton steps on the active pattern.
fn inner_solve(
    f: &Atom,
    a: &DenseMatrix,
    rho: f64,
    x: &DenseVector,
    w0: DenseVector,
) -> Result<DenseVector> {
    let g = a.gram();
    let c = a.tmatvec(x)?;
    let residual = |w: &DenseVector| -> Result<DenseVector> {
        let gw = g.matvec(w)?;
        let cg = f.conj_grad(w)?;
        Ok(DenseVector::from_fn(w.dim(), |i| {
            cg[i] + rho * gw[i] - c[i]
        }))
    };
    let lip = conj_grad_lipschitz(f)? + rho * crate::linalg::symmetric_extreme_eigenvalues(&g).1;
    let step = 1.0 / lip;
    let scale = 1.0 + c.norm();

    let mut w = w0.clone();
    let mut w_prev = w0;
    let mut t: f64 = 1.0;
    for _ in 0..INNER_MAX_ITERS {
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        let v = w.lincomb(1.0 + beta, &w_prev, -beta);
        let rv = residual(&v)?;
        let next = v.lincomb(1.0, &rv, -step);
        // Gradient restart: drop momentum when it points uphill.
        if rv.dot(&(&next - &w)) > 0.0 {
            t = 1.0;
        } else {
            t = t_next;
        }
        w_prev = std::mem::replace(&mut w, next);
        if residual(&w)?.norm() <= INNER_TOL * scale {
            break;
        }
    }
    for _ in 0..POLISH_STEPS {
        let r = residual(&w)?;
        if r.norm() <= 1e-15 * scale {
            break;
        }
        let k = conj_grad_jacobian(f, &w)?.add(&g.scaled(rho))?;
        let delta = lstsq_min_norm(&k, &r)?;
        let candidate = &w - &delta;
        if residual(&candidate)?.norm() < r.norm() {
            w = candidate;
        } else {
            break;
        }
    }
    Ok(w)
}

fn conj_grad_lipschitz(f: &Atom) -> Result<f64> {
    Ok(match f {
        Atom::QuadraticResidual { .. } => 1.0,
        Atom::ScaledSqNorm(_) => {
            1.0 / crate::linalg::symmetric_extreme_eigenvalues(
                f.curvature().expect("scaled_sqnorm"),
            )
            .0
        }
        Atom::ElasticNet { lambda2, .. } => 1.0 / lambda2,
        _ => {
            return Err(Error::InvalidParameter(format!(
                "no conjugate gradient for {}",
                f.kind()
            )))
        }
    })
}

/// Solves `(∂f* + ρAᵀA)w = Aᵀx` from the origin and from a far start and
/// checks that `Aw` agrees even when `w` does not. The violation is
/// `‖Aw₁ − Aw₂‖ / (1 + ‖Aw₁‖)`.
pub fn single_valued_check(
    f: &Atom,
    a: &DenseMatrix,
    rho: f64,
    points: &[DenseVector],
) -> Result<CheckReport> {
    let mut rng = Rng::new(0x5eed);
    let mut w = Worst::default();
    for x in points {
        let w1 = inner_solve(f, a, rho, x, DenseVector::zeros(a.cols()))?;
        let w2 = inner_solve(f, a, rho, x, rng.normal_vector(a.cols()).scaled(10.0))?;
        let (aw1, aw2) = (a.matvec(&w1)?, a.matvec(&w2)?);
        w.push(aw1.dist(&aw2) / (1.0 + aw1.norm()));
    }
    Ok(w.report("single_valued", SINGLE_VALUED_TOL))
}

fn random_atom(rng: &mut Rng, kind: MoreauAtom, m: usize) -> Result<Atom> {
    Ok(match kind {
        MoreauAtom::Quadratic => {
            if rng.bernoulli(0.5) {
                Atom::quadratic_residual(rng.normal_vector(m))
            } else {
                Atom::scaled_sqnorm(
                    rng.uniform(0.2, 2.0),
                    rng.normal_matrix(m, m, 0.3).add_diag(1.0),
                )?
            }
        }
        MoreauAtom::ElasticNet => {
            Atom::elastic_net(rng.uniform(0.1, 1.0), rng.uniform(0.2, 2.0), m)?
        }
    })
}

/// Residual of the decomposition over `count` random `(x, A, ρ)` with
/// `ρ ∈ {0.1, 1, 10}`; one in ten instances uses `A = I`.
pub fn moreau_random_instances(seed: u64, kind: MoreauAtom, count: usize) -> Result<CheckReport> {
    let mut rng = Rng::new(seed).fork(11 + kind as u64);
    let mut w = Worst::default();
    for i in 0..count {
        let m = rng.int_range(1, 5);
        let n = match kind {
            // Pattern systems are only guaranteed solvable for full column rank.
            MoreauAtom::ElasticNet => rng.int_range(m, m + 3),
            MoreauAtom::Quadratic => rng.int_range(1, 7),
        };
        let a = if i % 10 == 0 {
            DenseMatrix::identity(m)
        } else {
            rng.normal_matrix(n, m, 1.0)
        };
        let f = random_atom(&mut rng, kind, m)?;
        let rho = [0.1, 1.0, 10.0][i % 3];
        let x = rng.normal_vector(a.rows()).scaled(2.0);
        w.push(moreau_residual(&f, &a, rho, &x)?);
    }
    Ok(w.report(
        match kind {
            MoreauAtom::Quadratic => "moreau_quadratic",
            MoreauAtom::ElasticNet => "moreau_elastic_net",
        },
        MOREAU_TOL,
    ))
}

pub(crate) fn default_moreau(seed: u64, kind: MoreauAtom) -> Result<CheckReport> {
    moreau_random_instances(seed, kind, 1000)
}

/// Rank-deficient `A` (fewer rows than columns) with elastic-net and quadratic
/// `f`, plus `A = I`.
pub fn single_valued_random_instances(seed: u64, count: usize) -> Result<CheckReport> {
    let mut rng = Rng::new(seed).fork(13);
    let mut reports = Vec::new();
    for i in 0..count {
        let m = rng.int_range(3, 7);
        let n = rng.int_range(1, m);
        let a = if i % 10 == 0 {
            DenseMatrix::identity(m)
        } else {
            rng.normal_matrix(n, m, 1.0)
        };
        let kind = if i % 4 == 3 {
            MoreauAtom::Quadratic
        } else {
            MoreauAtom::ElasticNet
        };
        let f = random_atom(&mut rng, kind, m)?;
        let rho = [0.1, 1.0, 10.0][i % 3];
        let points: Vec<_> = (0..3)
            .map(|_| rng.normal_vector(a.rows()).scaled(2.0))
            .collect();
        reports.push(single_valued_check(&f, &a, rho, &points)?);
    }
    Ok(super::merge("single_valued", reports, SINGLE_VALUED_TOL))
}

pub(crate) fn default_single_valued(seed: u64) -> Result<CheckReport> {
    single_valued_random_instances(seed, 60)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqnorm_with_identity_halves_both_ways() {
        // f = ½‖·‖², A = I, ρ = 1: both resolvents halve x.
        let f = Atom::scaled_sqnorm(1.0, DenseMatrix::identity(3)).unwrap();
        let a = DenseMatrix::identity(3);
        let x = DenseVector::from([1.0, -2.0, 4.0]);
        let u = primal_resolvent(&f, &a, 1.0, &x).unwrap();
        let w = dual_resolvent(&f, &a, 1.0, &x).unwrap();
        assert!(u.dist(&x.scaled(0.5)) < 1e-15);
        assert!(w.dist(&x.scaled(0.5)) < 1e-15);
        assert!(moreau_residual(&f, &a, 1.0, &x).unwrap() < 1e-15);
    }

    #[test]
    fn random_quadratic_residual_is_tiny() {
        let mut rng = Rng::new(3);
        let a = rng.normal_matrix(5, 3, 1.0);
        let f = Atom::quadratic_residual(rng.normal_vector(3));
        let x = rng.normal_vector(5);
        assert!(moreau_residual(&f, &a, 1.0, &x).unwrap() <= 1e-10);
    }

    #[test]
    fn elastic_net_identity_matches_shrinkage() {
        // A = I: u is the elastic-net prox.
        let f = Atom::elastic_net(1.0, 0.5, 3).unwrap();
        let a = DenseMatrix::identity(3);
        let x = DenseVector::from([3.0, 0.4, -2.0]);
        let u = primal_resolvent(&f, &a, 2.0, &x).unwrap();
        assert!(u.dist(&f.prox(2.0, &x).unwrap()) < 1e-14);
        assert!(moreau_residual(&f, &a, 2.0, &x).unwrap() < 1e-14);
    }

    #[test]
    fn wrong_resolvent_breaks_identity() {
        // Using ρ in one resolvent and 2ρ in the other must not cancel.
        let f = Atom::elastic_net(0.5, 1.0, 2).unwrap();
        let a = DenseMatrix::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.0], vec![2.0, -1.0]]).unwrap();
        let x = DenseVector::from([1.0, 2.0, -1.0]);
        let u = primal_resolvent(&f, &a, 1.0, &x).unwrap();
        let w = dual_resolvent(&f, &a, 2.0, &x).unwrap();
        let r = (&(&x - &u) - &a.matvec(&w).unwrap()).norm();
        assert!(r > 1e-3, "{r}");
    }

    #[test]
    fn rank_deficient_inner_solutions_share_image() {
        let f = Atom::elastic_net(1.0, 1.0, 3).unwrap();
        let a = DenseMatrix::from_rows(&[vec![1.0, 1.0, 0.0]]).unwrap();
        let r = single_valued_check(
            &f,
            &a,
            1.0,
            &[DenseVector::from([0.5]), DenseVector::from([4.0])],
        )
        .unwrap();
        assert!(r.pass, "{r}");
    }

    #[test]
    fn default_checks_pass() {
        for r in [
            default_moreau(42, MoreauAtom::Quadratic).unwrap(),
            default_moreau(42, MoreauAtom::ElasticNet).unwrap(),
            default_single_valued(42).unwrap(),
        ] {
            assert!(r.pass && r.instances_run > 0, "{r}");
        }
    }
}
