//! Checks on the flows and their discretizations: the descent inequality, gap
//! decompositions, affine invariance, rate envelopes and splitting fixed
//! points.

use crate::atoms::Atom;
use crate::baselines::gd_step;
use crate::error::{Error, Result};
use crate::flows::{
    explicit_step, Admm, AdmmState, FlowField, ImplicitStepper, Pdhg, PdhgState, Space,
};
use crate::linalg::{
    solve_general, symmetric_extreme_eigenvalues, Cholesky, DenseMatrix, DenseVector,
};
use crate::problem::{Certificate, CompositeProblem};
use crate::rng::Rng;

use super::instances::{
    certified, random_logistic_elastic_net, random_nonsingular, random_quadratic,
};
use super::{
    merge, CheckReport, Worst, ADMM_FIXED_POINT_TOL, AFFINE_INVARIANCE_TOL, AVERAGED_RATE_TOL,
    DESCENT_TOL, EQUIVARIANCE_TOL, GAP_IDENTITY_TOL, GD_DISAGREEMENT_MIN, IMPLICIT_RATE_TOL,
    PDHG_FIXED_POINT_TOL, STRONG_RATE_TOL,
};

/// `max(0, ∇H(z)ᵀF(z) + H(z))`: along the flow `H` decays at least as fast as
/// `e^{−t}`.
pub fn descent_inequality_check(
    problem: &CompositeProblem,
    cert: &Certificate,
    space: Space,
    points: &[DenseVector],
) -> Result<CheckReport> {
    let field = FlowField::new(problem, space)?;
    let mut w = Worst::default();
    for z in points {
        let h = field.hamiltonian(cert, z)?;
        let rate = field.hamiltonian_grad(cert, z)?.dot(&field.eval(z)?);
        w.push((rate + h).max(0.0));
    }
    Ok(w.report("descent_inequality", DESCENT_TOL))
}

/// At each `(y, p)`: the partial gap at `(Ay, Aᵀp)` equals its two Bregman
/// terms, the full gap equals its four terms, every term is nonnegative, and
/// partial ≤ full. Violations are scaled by `max(1, full gap)`.
pub fn gap_identity_check(
    problem: &CompositeProblem,
    cert: &Certificate,
    points: &[(DenseVector, DenseVector)],
) -> Result<CheckReport> {
    let mut w = Worst::default();
    for (y, p) in points {
        let x = problem.ax(y)?;
        let q = problem.atp(p)?;
        let partial = problem.partial_gap(cert, &x, &q)?;
        let full = problem.full_gap(y, p)?;
        let scale = full.abs().max(1.0);
        let two = problem.partial_gap_terms(cert, &x, &q)?;
        let four = problem.full_gap_terms(cert, y, p)?;
        let two_sum: f64 = two.iter().map(|t| t.value).sum();
        let four_sum: f64 = four.iter().map(|t| t.value).sum();
        let negative = two
            .iter()
            .chain(four.iter())
            .map(|t| (-t.value).max(0.0))
            .fold(0.0, f64::max);
        w.push(
            [
                (partial - two_sum).abs() / partial.abs().max(1.0),
                (full - four_sum).abs() / scale,
                negative / scale,
                (partial - full).max(0.0) / scale,
            ]
            .into_iter()
            .fold(0.0, f64::max),
        );
    }
    Ok(w.report("gap_identity", GAP_IDENTITY_TOL))
}

/// The problem in coordinates `y = Ry'` with its mapped certificate
/// `(R^{-1}y⋆, p⋆)`.
fn transformed(
    problem: &CompositeProblem,
    cert: &Certificate,
    r: &DenseMatrix,
) -> Result<(CompositeProblem, Certificate)> {
    let tp = problem.right_transformed(r)?;
    let y = solve_general(r, &cert.y_star)?;
    let tc = Certificate::from_pair(&tp, y, cert.p_star.clone())?;
    Ok((tp, tc))
}

/// Maps a `(y, q)` point to the transformed coordinates `(R^{-1}y, Rᵀq)`.
fn map_yq(r: &DenseMatrix, z: &DenseVector) -> Result<DenseVector> {
    let (y, q) = z.split(r.rows());
    Ok(solve_general(r, &y)?.concat(&r.tmatvec(&q)?))
}

/// Runs explicit steps in `(y, q)` on the problem and on its transform by `R`
/// from corresponding starts, and compares the Hamiltonian traces. The
/// violation is the largest relative difference over `steps` steps.
pub fn affine_invariance_check(
    problem: &CompositeProblem,
    cert: &Certificate,
    r: &DenseMatrix,
    z0: &DenseVector,
    steps: usize,
    epsilon: f64,
) -> Result<CheckReport> {
    let (tp, tc) = transformed(problem, cert, r)?;
    let field = FlowField::new(problem, Space::Yq)?;
    let tfield = FlowField::new(&tp, Space::Yq)?;
    let mut z = z0.clone();
    let mut tz = map_yq(r, z0)?;
    let mut w = Worst::default();
    for _ in 0..steps {
        z = explicit_step(&field, &z, epsilon)?;
        tz = explicit_step(&tfield, &tz, epsilon)?;
        let h = field.hamiltonian(cert, &z)?;
        let th = tfield.hamiltonian(&tc, &tz)?;
        w.push(relative_difference(h, th));
    }
    Ok(w.report("affine_invariance_hd", AFFINE_INVARIANCE_TOL))
}

fn relative_difference(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    if !(a.is_finite() && b.is_finite()) {
        return f64::INFINITY;
    }
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GdExpectation {
    /// Objective traces agree to the affine-invariance tolerance.
    Agree,
    /// Objective traces differ by more than 1e-2 relative at some step.
    Disagree,
}

/// Runs gradient descent with one step size on the problem and on its
/// transform by `R`, from corresponding starts, and compares objective
/// traces. A trace that blows up counts as infinitely different.
pub fn gd_invariance_check(
    problem: &CompositeProblem,
    r: &DenseMatrix,
    y0: &DenseVector,
    steps: usize,
    step: f64,
    expect: GdExpectation,
) -> Result<CheckReport> {
    let tp = problem.right_transformed(r)?;
    let mut y = y0.clone();
    let mut ty = solve_general(r, y0)?;
    let mut largest: f64 = 0.0;
    for _ in 0..steps {
        y = gd_step(problem, &y, step)?;
        ty = gd_step(&tp, &ty, step)?;
        let d = relative_difference(
            problem.primal_value(&y)?,
            tp.primal_value(&ty).unwrap_or(f64::INFINITY),
        );
        largest = largest.max(d);
        if !largest.is_finite() {
            break;
        }
    }
    Ok(match expect {
        GdExpectation::Agree => CheckReport::new(
            "gd_orthogonal_invariance",
            steps,
            largest,
            AFFINE_INVARIANCE_TOL,
        ),
        GdExpectation::Disagree => CheckReport::new(
            "gd_non_invariance",
            steps,
            (GD_DISAGREEMENT_MIN - largest).max(0.0),
            0.0,
        ),
    })
}

/// One explicit step commutes with the change of coordinates
/// `(y, q) → (R^{-1}y, Rᵀq)`. Violations are relative to `1 + ‖Mz⁺‖`.
pub fn explicit_equivariance_check(
    problem: &CompositeProblem,
    r: &DenseMatrix,
    points: &[DenseVector],
    epsilon: f64,
) -> Result<CheckReport> {
    let tp = problem.right_transformed(r)?;
    let field = FlowField::new(problem, Space::Yq)?;
    let tfield = FlowField::new(&tp, Space::Yq)?;
    let mut w = Worst::default();
    for z in points {
        let mapped_after = map_yq(r, &explicit_step(&field, z, epsilon)?)?;
        let after_mapped = explicit_step(&tfield, &map_yq(r, z)?, epsilon)?;
        w.push(mapped_after.dist(&after_mapped) / (1.0 + mapped_after.norm()));
    }
    Ok(w.report("explicit_equivariance", EQUIVARIANCE_TOL))
}

/// Extreme eigenvalues `(μ, L)` of the Hamiltonian's Hessian for a quadratic
/// residual `h` and scaled squared norm `g`: `blockdiag(AᵀA, C^{-1})` in
/// `(y, q)` and `blockdiag(I, AC^{-1}Aᵀ)` in `(x, p)`, where `C = λBᵀB`.
pub fn hessian_extremes(problem: &CompositeProblem, space: Space) -> Result<(f64, f64)> {
    let (Atom::QuadraticResidual { .. }, Some(c)) = (problem.h(), problem.g().curvature()) else {
        return Err(Error::InvalidParameter(format!(
            "exact Hessian bounds need quadratic_residual + scaled_sqnorm, got {} + {}",
            problem.h().kind(),
            problem.g().kind()
        )));
    };
    let c_inv = Cholesky::factor(c)?.inverse();
    let (first, second) = match space {
        Space::Yq => (
            symmetric_extreme_eigenvalues(problem.gram()),
            symmetric_extreme_eigenvalues(&c_inv),
        ),
        Space::Xp => {
            let s = problem.a().matmul(&c_inv)?.matmul(problem.a_t())?;
            ((1.0, 1.0), symmetric_extreme_eigenvalues(&s))
        }
    };
    Ok((first.0.min(second.0), first.1.max(second.1)))
}

#[derive(Clone, Debug, PartialEq)]
pub enum RateScheme {
    /// `H(z^k) ≤ (1+ε)^{-k} H(z⁰)` for implicit steps.
    Implicit { epsilon: f64 },
    /// `H(z^{k+1}) ≤ (1 − εμ/L) H(z^k)` for explicit steps with
    /// `2ε = (L² + L/μ)^{-1}`.
    ExplicitStrong,
    /// `H(z̄^T) ≤ (H(z⁰) + ‖z⁰ − z⋆‖²/(2L)) / (εT)` for explicit steps with
    /// `ε = 1/(L² + 1)` and `z̄^T` the mean of `z⁰, …, z^{T−1}`.
    ExplicitAveraged { horizons: Vec<usize> },
}

/// Runs the scheme in `(y, q)` from `z0` and measures the worst relative
/// excess over its envelope. `steps` is ignored by the averaged scheme, which
/// runs to its largest horizon.
pub fn rate_envelope_check(
    scheme: &RateScheme,
    problem: &CompositeProblem,
    cert: &Certificate,
    z0: &DenseVector,
    steps: usize,
) -> Result<CheckReport> {
    let field = FlowField::new(problem, Space::Yq)?;
    let (mu, lip) = hessian_extremes(problem, Space::Yq)?;
    let h0 = field.hamiltonian(cert, z0)?;
    let mut w = Worst::default();
    match scheme {
        RateScheme::Implicit { epsilon } => {
            let stepper = ImplicitStepper::new(field, *epsilon)?;
            let log_factor = (1.0 + epsilon).ln();
            let mut z = z0.clone();
            for k in 1..=steps {
                z = stepper.step(&z)?;
                let bound = h0 * (-(k as f64) * log_factor).exp();
                w.push(field.hamiltonian(cert, &z)? / bound - 1.0);
            }
            Ok(w.report("rate_implicit", IMPLICIT_RATE_TOL))
        }
        RateScheme::ExplicitStrong => {
            let epsilon = 0.5 / (lip * lip + lip / mu);
            let factor = 1.0 - epsilon * mu / lip;
            let mut z = z0.clone();
            let mut h = h0;
            for _ in 0..steps {
                z = explicit_step(&field, &z, epsilon)?;
                let next = field.hamiltonian(cert, &z)?;
                w.push(next / h - factor);
                h = next;
            }
            Ok(w.report("rate_explicit_strong", STRONG_RATE_TOL))
        }
        RateScheme::ExplicitAveraged { horizons } => {
            let epsilon = 1.0 / (lip * lip + 1.0);
            let dist_sq = z0.dist(&field.optimum(cert)).powi(2);
            let budget = h0 + dist_sq / (2.0 * lip);
            let last = horizons.iter().copied().max().unwrap_or(0);
            let mut z = z0.clone();
            let mut sum = DenseVector::zeros(z0.dim());
            for t in 1..=last {
                sum.axpy(1.0, &z);
                z = explicit_step(&field, &z, epsilon)?;
                if horizons.contains(&t) {
                    let avg = sum.scaled(1.0 / t as f64);
                    let bound = budget / (epsilon * t as f64);
                    w.push(field.hamiltonian(cert, &avg)? / bound - 1.0);
                }
            }
            Ok(w.report("rate_explicit_averaged", AVERAGED_RATE_TOL))
        }
    }
}

/// One ADMM step from the certified optimum moves no coordinate by more than
/// the tolerance, for each `ρ`.
pub fn admm_fixed_point_check(
    problem: &CompositeProblem,
    cert: &Certificate,
    rhos: &[f64],
) -> Result<CheckReport> {
    let mut w = Worst::default();
    for &rho in rhos {
        let state = AdmmState {
            x: cert.x_star.clone(),
            y: cert.y_star.clone(),
            p: cert.p_star.clone(),
        };
        let next = Admm::new(problem, rho)?.step(&state)?;
        let moved = [
            (&next.x - &state.x).norm_inf(),
            (&next.y - &state.y).norm_inf(),
            (&next.p - &state.p).norm_inf(),
        ];
        w.push(moved.into_iter().fold(0.0, f64::max));
    }
    Ok(w.report("admm_fixed_point", ADMM_FIXED_POINT_TOL))
}

/// One PDHG step from the certified optimum moves no coordinate by more than
/// the tolerance, for each `(ρ, σ)`.
pub fn pdhg_fixed_point_check(
    problem: &CompositeProblem,
    cert: &Certificate,
    steps: &[(f64, f64)],
) -> Result<CheckReport> {
    let mut w = Worst::default();
    for &(rho, sigma) in steps {
        let state = PdhgState {
            y: cert.y_star.clone(),
            p: cert.p_star.clone(),
        };
        let next = Pdhg::new(problem, rho, sigma)?.step(&state)?;
        w.push(
            (&next.y - &state.y)
                .norm_inf()
                .max((&next.p - &state.p).norm_inf()),
        );
    }
    Ok(w.report("pdhg_fixed_point", PDHG_FIXED_POINT_TOL))
}

/// A quadratic and a logistic/elastic-net problem with certificates.
fn sample_problems(rng: &mut Rng) -> Result<Vec<(CompositeProblem, Certificate)>> {
    Ok(vec![
        certified(random_quadratic(rng, 6, 4, false)?)?,
        certified(random_quadratic(rng, 4, 6, false)?)?,
        certified(random_logistic_elastic_net(rng, 8, 5)?)?,
    ])
}

fn points_around(
    rng: &mut Rng,
    center: &DenseVector,
    count: usize,
    half_width: f64,
) -> Vec<DenseVector> {
    (0..count)
        .map(|_| center + &rng.uniform_vector(center.dim(), -half_width, half_width))
        .collect()
}

pub(crate) fn default_descent(seed: u64) -> Result<CheckReport> {
    let mut rng = Rng::new(seed).fork(21);
    let mut reports = Vec::new();
    for (problem, cert) in sample_problems(&mut rng)? {
        for space in [Space::Xp, Space::Yq] {
            let center = FlowField::new(&problem, space)?.optimum(&cert);
            let points = points_around(&mut rng, &center, 100, 2.0);
            reports.push(descent_inequality_check(&problem, &cert, space, &points)?);
        }
    }
    Ok(merge("descent_inequality", reports, DESCENT_TOL))
}

pub(crate) fn default_gap_identity(seed: u64) -> Result<CheckReport> {
    let mut rng = Rng::new(seed).fork(22);
    let mut reports = Vec::new();
    for (problem, cert) in sample_problems(&mut rng)? {
        let points = gap_points(&mut rng, &problem, &cert, 1000);
        reports.push(gap_identity_check(&problem, &cert, &points)?);
    }
    Ok(merge("gap_identity", reports, GAP_IDENTITY_TOL))
}

/// Random `(y, p)` near the optimum; for a logistic `h` the dual point is
/// drawn inside the domain of `h*(−·)` so the full gap is finite.
pub fn gap_points(
    rng: &mut Rng,
    problem: &CompositeProblem,
    cert: &Certificate,
    count: usize,
) -> Vec<(DenseVector, DenseVector)> {
    (0..count)
        .map(|_| {
            let y = &cert.y_star + &rng.normal_vector(problem.m());
            let p = match problem.h() {
                Atom::Logistic { labels, scale } => DenseVector::from_fn(problem.n(), |i| {
                    -scale * labels[i] * rng.uniform(0.0, 1.0)
                }),
                _ => &cert.p_star + &rng.normal_vector(problem.n()),
            };
            (y, p)
        })
        .collect()
}

/// `R = diag(1, …, m)`.
fn graded_diagonal(m: usize) -> DenseMatrix {
    DenseMatrix::diag(&(1..=m).map(|i| i as f64).collect::<Vec<_>>())
}

pub(crate) fn default_affine_invariance(seed: u64) -> Result<CheckReport> {
    let mut rng = Rng::new(seed).fork(23);
    let m = 10;
    let (problem, cert) = certified(random_quadratic(&mut rng, m, m, true)?)?;
    let (_, lip) = hessian_extremes(&problem, Space::Yq)?;
    let epsilon = 1.0 / (lip * lip + 1.0);
    let mut reports = Vec::new();
    for r in [
        DenseMatrix::identity(m),
        graded_diagonal(m),
        random_nonsingular(&mut rng, m, 1.0),
    ] {
        let z0 = rng.normal_vector(2 * m);
        reports.push(affine_invariance_check(
            &problem, &cert, &r, &z0, 1000, epsilon,
        )?);
    }
    Ok(merge(
        "affine_invariance_hd",
        reports,
        AFFINE_INVARIANCE_TOL,
    ))
}

pub(crate) fn default_gd_invariance(seed: u64, orthogonal: bool) -> Result<CheckReport> {
    let mut rng = Rng::new(seed).fork(24);
    let m = 10;
    let problem = random_quadratic(&mut rng, m, m, false)?;
    let hess = problem
        .gram()
        .add(problem.g().curvature().expect("scaled_sqnorm"))?;
    let step = 1.0 / symmetric_extreme_eigenvalues(&hess).1;
    let y0 = rng.normal_vector(m);
    if orthogonal {
        let r = rng.orthogonal_matrix(m);
        gd_invariance_check(&problem, &r, &y0, 100, step, GdExpectation::Agree)
    } else {
        gd_invariance_check(
            &problem,
            &graded_diagonal(m),
            &y0,
            100,
            step,
            GdExpectation::Disagree,
        )
    }
}

pub(crate) fn default_equivariance(seed: u64) -> Result<CheckReport> {
    let mut rng = Rng::new(seed).fork(25);
    let m = 6;
    let problem = random_quadratic(&mut rng, 8, m, false)?;
    let r = random_nonsingular(&mut rng, m, 1.0);
    let points: Vec<_> = (0..100).map(|_| rng.normal_vector(2 * m)).collect();
    explicit_equivariance_check(&problem, &r, &points, 0.1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum DefaultRate {
    Implicit,
    Strong,
    Averaged,
}

pub(crate) fn default_rate(seed: u64, which: DefaultRate) -> Result<CheckReport> {
    let mut rng = Rng::new(seed).fork(26);
    let mut reports = Vec::new();
    for _ in 0..10 {
        let n = rng.int_range(2, 21);
        let (problem, cert) = certified(random_quadratic(&mut rng, n, n, true)?)?;
        let z0 = rng.normal_vector(2 * n);
        match which {
            DefaultRate::Implicit => {
                for epsilon in [0.1, 1.0, 10.0] {
                    reports.push(rate_envelope_check(
                        &RateScheme::Implicit { epsilon },
                        &problem,
                        &cert,
                        &z0,
                        200,
                    )?);
                }
            }
            DefaultRate::Strong => {
                reports.push(rate_envelope_check(
                    &RateScheme::ExplicitStrong,
                    &problem,
                    &cert,
                    &z0,
                    200,
                )?);
            }
            DefaultRate::Averaged => {
                let scheme = RateScheme::ExplicitAveraged {
                    horizons: vec![10, 100, 1000],
                };
                reports.push(rate_envelope_check(&scheme, &problem, &cert, &z0, 0)?);
            }
        }
    }
    let (name, tol) = match which {
        DefaultRate::Implicit => ("rate_implicit", IMPLICIT_RATE_TOL),
        DefaultRate::Strong => ("rate_explicit_strong", STRONG_RATE_TOL),
        DefaultRate::Averaged => ("rate_explicit_averaged", AVERAGED_RATE_TOL),
    };
    Ok(merge(name, reports, tol))
}

pub(crate) fn default_admm_fixed_point(seed: u64) -> Result<CheckReport> {
    let mut rng = Rng::new(seed).fork(27);
    let mut reports = Vec::new();
    for (problem, cert) in sample_problems(&mut rng)? {
        reports.push(admm_fixed_point_check(&problem, &cert, &[0.1, 1.0, 10.0])?);
    }
    Ok(merge("admm_fixed_point", reports, ADMM_FIXED_POINT_TOL))
}

pub(crate) fn default_pdhg_fixed_point(seed: u64) -> Result<CheckReport> {
    let mut rng = Rng::new(seed).fork(28);
    let mut reports = Vec::new();
    for (problem, cert) in sample_problems(&mut rng)? {
        let norm = problem.a().norm2_estimate();
        let balanced = 1.0 / norm;
        reports.push(pdhg_fixed_point_check(
            &problem,
            &cert,
            &[(balanced, balanced), (0.5, 0.5), (1.0, 0.1)],
        )?);
    }
    Ok(merge("pdhg_fixed_point", reports, PDHG_FIXED_POINT_TOL))
}
