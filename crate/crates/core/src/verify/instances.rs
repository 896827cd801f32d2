//! Small random problem instances shared by the checks and the tests.

use crate::atoms::Atom;
use crate::error::Result;
use crate::linalg::{DenseMatrix, DenseVector};
use crate::problem::{certify, Certificate, CertifyMethod, CompositeProblem};
use crate::rng::Rng;

/// `½‖Ay − b‖² + (λ/2)‖By‖²` with Gaussian `A`, `B = I + noise` and
/// `λ ∈ [0.2, 2]`. With `homogeneous`, `b = 0` so the optimum is the origin.
pub fn random_quadratic(
    rng: &mut Rng,
    n: usize,
    m: usize,
    homogeneous: bool,
) -> Result<CompositeProblem> {
    let a = rng.normal_matrix(n, m, 1.0 / (n as f64).sqrt());
    let noise = rng.normal_matrix(m, m, 0.3 / (m as f64).sqrt());
    let b_mat = noise.add_diag(1.0);
    let lambda = rng.uniform(0.2, 2.0);
    let b = if homogeneous {
        DenseVector::zeros(n)
    } else {
        rng.normal_vector(n)
    };
    CompositeProblem::new(
        Atom::quadratic_residual(b),
        Atom::scaled_sqnorm(lambda, b_mat)?,
        a,
    )
}

/// Logistic loss with random labels plus an elastic net, `λ₁ ∈ [0.05, 0.3]`,
/// `λ₂ ∈ [0.1, 1]`.
pub fn random_logistic_elastic_net(rng: &mut Rng, n: usize, m: usize) -> Result<CompositeProblem> {
    let a = rng.normal_matrix(n, m, 1.0);
    let labels = DenseVector::from_fn(n, |_| if rng.bernoulli(0.5) { 1.0 } else { -1.0 });
    let l1 = rng.uniform(0.05, 0.3);
    let l2 = rng.uniform(0.1, 1.0);
    CompositeProblem::new(
        Atom::logistic(labels, 1.0)?,
        Atom::elastic_net(l1, l2, m)?,
        a,
    )
}

/// `h(x) = ½x²`, `g(y) = ½y²`, `A = 1`.
pub fn toy_1d() -> CompositeProblem {
    CompositeProblem::new(
        Atom::quadratic_residual(DenseVector::zeros(1)),
        Atom::scaled_sqnorm(1.0, DenseMatrix::identity(1)).expect("identity is invertible"),
        DenseMatrix::identity(1),
    )
    .expect("dimensions agree")
}

/// A problem together with its certificate.
pub fn certified(problem: CompositeProblem) -> Result<(CompositeProblem, Certificate)> {
    let cert = certify(&problem, CertifyMethod::Auto)?;
    Ok((problem, cert))
}

/// A matrix `I + δG` with Gaussian `G`, redrawn until well away from singular.
pub fn random_nonsingular(rng: &mut Rng, m: usize, delta: f64) -> DenseMatrix {
    loop {
        let r = rng
            .normal_matrix(m, m, delta / (m as f64).sqrt())
            .add_diag(1.0);
        if crate::linalg::cond_estimate(&r.gram()) < 1e6 {
            return r;
        }
    }
}
