//! Seeded problem generators for the benchmarks.

use hd_core::linalg::{symmetric_extreme_eigenvalues, Lu};
use hd_core::{
    certify, Atom, Certificate, CertifyMethod, CompositeProblem, DenseMatrix, DenseVector, Error,
    Rng,
};

use crate::error::{BenchError, Result};

/// Default perturbation size of the conditioning matrix `M = I + δG`.
pub const DEFAULT_DELTA: f64 = 0.3;
/// Fraction of logistic labels flipped after the planted separator.
pub const DEFAULT_FLIP_FRACTION: f64 = 0.1;

const STREAM_A: u64 = 1;
const STREAM_B: u64 = 2;
const STREAM_M: u64 = 3;
const STREAM_LABELS: u64 = 4;
const STREAM_SEPARATOR: u64 = 5;

/// Regularized least squares `½‖Ay − b‖² + (λ/2)‖y‖²` with `A` and `b`
/// IID standard normal, certified in closed form.
pub fn gen_ls(
    n: usize,
    m: usize,
    lambda: f64,
    seed: u64,
) -> Result<(CompositeProblem, Certificate)> {
    if n == 0 || m == 0 {
        return Err(BenchError::Config(format!(
            "ls needs n, m >= 1, got n={n}, m={m}"
        )));
    }
    let rng = Rng::new(seed);
    let a = rng.fork(STREAM_A).normal_matrix(n, m, 1.0);
    let b = rng.fork(STREAM_B).normal_vector(n);
    let g = Atom::scaled_sqnorm(lambda, DenseMatrix::identity(m)).map_err(config_error)?;
    let problem = CompositeProblem::new(Atom::quadratic_residual(b), g, a)?;
    let cert = certify(&problem, CertifyMethod::ClosedForm)?;
    Ok((problem, cert))
}

/// One member of a conditioning sweep.
#[derive(Clone, Debug)]
pub struct ConditionedProblem {
    pub j: usize,
    pub problem: CompositeProblem,
    /// `M^j`, so that `y = M^j y'` maps this problem's variable back.
    pub transform: DenseMatrix,
    /// Certificate mapped from the base problem, `y⋆ ↦ M^{-j}y⋆`, `p⋆` unchanged.
    pub cert: Certificate,
    /// `cond(ÂᵀÂ + λB̂ᵀB̂)`
    pub condition_number: f64,
}

/// `A → AM^j`, `B → BM^j` for `j = 0..=jmax` with `M = I + δG`,
/// `G` IID `N(0, 1/m)`.
pub fn conditioning_sequence(
    base: &CompositeProblem,
    cert: &Certificate,
    jmax: usize,
    delta: f64,
    seed: u64,
) -> Result<Vec<ConditionedProblem>> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(BenchError::Config(format!(
            "delta must be nonnegative, got {delta}"
        )));
    }
    let m = base.m();
    let mat = Rng::new(seed)
        .fork(STREAM_M)
        .normal_matrix(m, m, delta / (m as f64).sqrt())
        .add_diag(1.0);
    let lu = Lu::factor(&mat)
        .map_err(|e| BenchError::Config(format!("M = I + {delta}·G is singular: {e}")))?;

    let mut out = Vec::with_capacity(jmax + 1);
    let mut problem = base.clone();
    let mut transform = DenseMatrix::identity(m);
    let mut y_star = cert.y_star.clone();
    for j in 0..=jmax {
        if j > 0 {
            problem = problem.right_transformed(&mat)?;
            transform = transform.matmul(&mat)?;
            y_star = lu.solve(&y_star)?;
        }
        let mapped = Certificate::from_pair(&problem, y_star.clone(), cert.p_star.clone())?;
        let condition_number = quadratic_condition(&problem)?;
        out.push(ConditionedProblem {
            j,
            problem: problem.clone(),
            transform: transform.clone(),
            cert: mapped,
            condition_number,
        });
    }
    Ok(out)
}

/// `cond(AᵀA + λBᵀB)` for a quadratic residual plus scaled squared norm.
pub fn quadratic_condition(problem: &CompositeProblem) -> Result<f64> {
    let curvature = problem.g().curvature().ok_or_else(|| {
        BenchError::Config(format!(
            "condition number needs a scaled_sqnorm g, got {}",
            problem.g().kind()
        ))
    })?;
    let s = problem.gram().add(curvature)?;
    let (lo, hi) = symmetric_extreme_eigenvalues(&s);
    Ok(if lo > 0.0 { hi / lo } else { f64::INFINITY })
}

/// Parameters of the elastic-net logistic regression generator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogregSpec {
    pub n: usize,
    pub m: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub target_cond: f64,
    pub flip_fraction: f64,
    pub seed: u64,
}

impl Default for LogregSpec {
    fn default() -> Self {
        Self {
            n: 200,
            m: 100,
            lambda1: 0.01,
            lambda2: 0.01,
            target_cond: 1e6,
            flip_fraction: DEFAULT_FLIP_FRACTION,
            seed: 0,
        }
    }
}

/// A generated logistic problem with its certificate and the measured
/// `cond(AᵀA)`.
#[derive(Clone, Debug)]
pub struct LogregInstance {
    pub problem: CompositeProblem,
    pub cert: Certificate,
    pub condition_number: f64,
}

/// `(1/n)Σ log(1 + exp(lᵢaᵢᵀy)) + λ₁‖y‖₁ + (λ₂/2)‖y‖²` with Gaussian
/// features whose columns are scaled geometrically so that `cond(AᵀA)` lands
/// within a factor 2 of `target_cond`. Labels come from a planted separator
/// with a fraction flipped; the certificate is a proximal Newton solve.
pub fn gen_logreg(spec: &LogregSpec) -> Result<LogregInstance> {
    let LogregSpec {
        n,
        m,
        lambda1,
        lambda2,
        target_cond,
        flip_fraction,
        seed,
    } = *spec;
    if n == 0 || m == 0 {
        return Err(BenchError::Config(format!(
            "logreg needs n, m >= 1, got n={n}, m={m}"
        )));
    }
    if !(target_cond >= 1.0) || !target_cond.is_finite() {
        return Err(BenchError::Config(format!(
            "target_cond must be >= 1, got {target_cond}"
        )));
    }
    if !(0.0..=1.0).contains(&flip_fraction) {
        return Err(BenchError::Config(format!(
            "flip_fraction must lie in [0, 1], got {flip_fraction}"
        )));
    }
    let rng = Rng::new(seed);
    let features = rng.fork(STREAM_A).normal_matrix(n, m, 1.0);
    let ratio = column_ratio_for(&features, target_cond)?;
    let a = scale_columns(&features, ratio);
    let condition_number = gram_condition(&a);

    // The loss is log(1 + exp(l·aᵀy)), so a label of −sign(aᵀw) rewards y ∝ w.
    let w = rng.fork(STREAM_SEPARATOR).normal_vector(m);
    let margins = a.matvec(&w)?;
    let mut flips = rng.fork(STREAM_LABELS);
    let labels = DenseVector::from_fn(n, |i| {
        let l = if margins[i] >= 0.0 { -1.0 } else { 1.0 };
        if flips.bernoulli(flip_fraction) {
            -l
        } else {
            l
        }
    });
    let h = Atom::logistic_mean(labels).map_err(config_error)?;
    let g = Atom::elastic_net(lambda1, lambda2, m).map_err(config_error)?;
    let problem = CompositeProblem::new(h, g, a)?;
    let cert = certify(&problem, CertifyMethod::Newton)?;
    Ok(LogregInstance {
        problem,
        cert,
        condition_number,
    })
}

fn gram_condition(a: &DenseMatrix) -> f64 {
    let (lo, hi) = symmetric_extreme_eigenvalues(&a.gram());
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

/// Column `k` scaled by `ratio^{-k/(m−1)}`.
fn scale_columns(a: &DenseMatrix, ratio: f64) -> DenseMatrix {
    let m = a.cols();
    let denom = (m.max(2) - 1) as f64;
    let scales: Vec<f64> = (0..m).map(|k| ratio.powf(-(k as f64) / denom)).collect();
    DenseMatrix::from_fn(a.rows(), m, |i, k| a[(i, k)] * scales[k])
}

/// Bisects the log of the column ratio until `cond(AᵀA)` is within a factor 2
/// of the target. Targets at or below the unscaled condition keep the columns
/// isotropic.
fn column_ratio_for(a: &DenseMatrix, target: f64) -> Result<f64> {
    const MAX_BISECTIONS: usize = 100;
    let within = |c: f64| (c / target).ln().abs() <= 2f64.ln();
    let base = gram_condition(a);
    if base >= target / 2.0 {
        return Ok(1.0);
    }
    let mut lo = 0.0f64;
    let mut hi = target.ln().max(1.0);
    while gram_condition(&scale_columns(a, hi.exp())) < target {
        hi *= 2.0;
        if hi > 700.0 {
            return Err(BenchError::Config(format!(
                "cannot reach condition number {target:e} by column scaling"
            )));
        }
    }
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let c = gram_condition(&scale_columns(a, mid.exp()));
        if within(c) {
            return Ok(mid.exp());
        }
        if c < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(BenchError::Config(format!(
        "column scaling did not reach condition number {target:e} within a factor 2"
    )))
}

/// `h(x) = ½x²`, `g(y) = ½y²`, `A = 1` with its optimum at the origin.
pub fn toy1d() -> Result<(CompositeProblem, Certificate)> {
    let problem = CompositeProblem::new(
        Atom::quadratic_residual(DenseVector::zeros(1)),
        Atom::scaled_sqnorm(1.0, DenseMatrix::identity(1))?,
        DenseMatrix::identity(1),
    )?;
    let cert = certify(&problem, CertifyMethod::ClosedForm)?;
    Ok((problem, cert))
}

fn config_error(e: Error) -> BenchError {
    BenchError::Config(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ls_certificate_solves_normal_equations() {
        let (p, c) = gen_ls(8, 5, 1.0, 3).unwrap();
        let Atom::QuadraticResidual { b } = p.h() else {
            panic!()
        };
        let s = p.gram().add_diag(1.0);
        let r = &s.matvec(&c.y_star).unwrap() - &p.atp(b).unwrap();
        assert!(r.norm_inf() < 1e-12);
    }

    #[test]
    fn ls_is_deterministic() {
        let (p1, _) = gen_ls(6, 4, 0.5, 11).unwrap();
        let (p2, _) = gen_ls(6, 4, 0.5, 11).unwrap();
        assert_eq!(p1.a(), p2.a());
        let (p3, _) = gen_ls(6, 4, 0.5, 12).unwrap();
        assert_ne!(p1.a(), p3.a());
    }

    #[test]
    fn ls_rejects_empty_dims() {
        assert!(matches!(gen_ls(0, 3, 1.0, 0), Err(BenchError::Config(_))));
    }

    #[test]
    fn sequence_starts_at_base_problem_and_maps_certificates() {
        let (p, c) = gen_ls(12, 12, 1.0, 5).unwrap();
        let seq = conditioning_sequence(&p, &c, 3, 0.3, 5).unwrap();
        assert_eq!(seq.len(), 4);
        assert_eq!(seq[0].problem.a(), p.a());
        assert_eq!(seq[0].cert.y_star, c.y_star);
        for s in &seq {
            // Mapped optimum is optimal for the transformed problem.
            assert!(
                s.cert.tolerance <= 1e-8 * s.condition_number,
                "j={} tol={}",
                s.j,
                s.cert.tolerance
            );
            let back = s.transform.matvec(&s.cert.y_star).unwrap();
            assert!(back.dist(&c.y_star) <= 1e-9 * (1.0 + c.y_star.norm()));
        }
    }

    #[test]
    fn conditioning_grows() {
        let (p, c) = gen_ls(30, 30, 1.0, 2).unwrap();
        let seq = conditioning_sequence(&p, &c, 6, 0.3, 2).unwrap();
        assert!(seq[6].condition_number > seq[0].condition_number);
    }

    #[test]
    fn zero_delta_keeps_problem() {
        let (p, c) = gen_ls(5, 5, 1.0, 1).unwrap();
        let seq = conditioning_sequence(&p, &c, 2, 0.0, 1).unwrap();
        assert_eq!(seq[2].problem.a(), p.a());
    }

    #[test]
    fn logreg_hits_target_condition() {
        let spec = LogregSpec {
            n: 60,
            m: 20,
            target_cond: 1e4,
            seed: 7,
            ..LogregSpec::default()
        };
        let inst = gen_logreg(&spec).unwrap();
        assert!((inst.condition_number / 1e4).ln().abs() <= 2f64.ln());
        assert!(inst.cert.tolerance <= 1e-10);
    }

    #[test]
    fn logreg_unit_target_keeps_columns_isotropic() {
        let spec = LogregSpec {
            n: 40,
            m: 10,
            target_cond: 1.0,
            seed: 1,
            ..LogregSpec::default()
        };
        let inst = gen_logreg(&spec).unwrap();
        let raw = Rng::new(1).fork(STREAM_A).normal_matrix(40, 10, 1.0);
        assert_eq!(inst.problem.a(), &raw);
    }

    #[test]
    fn toy_optimum_is_origin() {
        let (_, c) = toy1d().unwrap();
        assert_eq!(c.y_star.as_slice(), &[0.0]);
        assert_eq!(c.f_star, 0.0);
    }
}
