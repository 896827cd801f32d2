//! Convex building blocks with an explicit capability set.
//!
//! An [`Atom`] only implements the operations it advertises through
//! [`Capabilities`]; asking for anything else returns
//! [`Error::MissingCapability`]. The elastic net, for example, has no gradient,
//! and the logistic loss has no closed-form conjugate gradient.

use bitflags::bitflags;

use crate::error::{Error, Result};
use crate::linalg::{compensated_sum, Cholesky, DenseMatrix, DenseVector};

bitflags! {
    #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
    pub struct Capabilities: u8 {
        const VALUE = 1 << 0;
        const GRAD = 1 << 1;
        const CONJ_VALUE = 1 << 2;
        const CONJ_GRAD = 1 << 3;
        const PROX = 1 << 4;
    }
}

/// Logistic loss magnitude past which the exact formulas are replaced by
/// their asymptotes.
const SATURATION: f64 = 30.0;
const PROX_NEWTON_TOL: f64 = 1e-12;
const PROX_NEWTON_MAX_ITERS: usize = 50;

/// `log(1 + exp(t))` without overflow.
pub fn softplus(t: f64) -> f64 {
    if t > SATURATION {
        t + (-t).exp()
    } else if t < -SATURATION {
        let e = t.exp();
        e - 0.5 * e * e
    } else {
        t.max(0.0) + (-t.abs()).exp().ln_1p()
    }
}

/// Logistic sigmoid `1 / (1 + exp(-t))`.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Scalar soft-thresholding `sign(v) * max(|v| - t, 0)`.
pub fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// `(I + σ∂g)^{-1} v` for `g = λ₁‖·‖₁ + (λ₂/2)‖·‖²`, valid for `λ₂ = 0` too
/// (plain lasso shrinkage), unlike [`Atom::elastic_net`].
pub fn elastic_net_prox(v: &[f64], sigma: f64, lambda1: f64, lambda2: f64) -> DenseVector {
    DenseVector::from_fn(v.len(), |i| {
        soft_threshold(v[i], sigma * lambda1) / (1.0 + sigma * lambda2)
    })
}

/// Entropy-like conjugate of `softplus`: `w ln w + (1-w) ln(1-w)` on `[0,1]`.
fn softplus_conj(w: f64) -> f64 {
    if !(0.0..=1.0).contains(&w) {
        return f64::INFINITY;
    }
    let xlnx = |t: f64| if t == 0.0 { 0.0 } else { t * t.ln() };
    xlnx(w) + xlnx(1.0 - w)
}

#[derive(Clone, Debug)]
pub struct ScaledSqNorm {
    lambda: f64,
    b: DenseMatrix,
    /// `λ BᵀB`
    curvature: DenseMatrix,
    curvature_factor: Cholesky,
}

#[derive(Clone, Debug)]
pub enum Atom {
    /// `f = 0`
    Zero { dim: usize },
    /// `h(x) = ½‖x − b‖²`
    QuadraticResidual { b: DenseVector },
    /// `g(y) = (λ/2)‖By‖²`
    ScaledSqNorm(ScaledSqNorm),
    /// `h(x) = scale · Σ log(1 + exp(lᵢ xᵢ))`
    Logistic { labels: DenseVector, scale: f64 },
    /// `g(y) = λ₁‖y‖₁ + (λ₂/2)‖y‖²`
    ElasticNet {
        lambda1: f64,
        lambda2: f64,
        dim: usize,
    },
}

impl Atom {
    pub fn zero(dim: usize) -> Self {
        Atom::Zero { dim }
    }

    pub fn quadratic_residual(b: DenseVector) -> Self {
        Atom::QuadraticResidual { b }
    }

    pub fn scaled_sqnorm(lambda: f64, b: DenseMatrix) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "scaled_sqnorm needs lambda > 0, got {lambda}"
            )));
        }
        let curvature = b.gram().scaled(lambda);
        let curvature_factor = Cholesky::factor(&curvature).map_err(|e| {
            Error::InvalidParameter(format!("scaled_sqnorm needs BᵀB invertible: {e}"))
        })?;
        Ok(Atom::ScaledSqNorm(ScaledSqNorm {
            lambda,
            b,
            curvature,
            curvature_factor,
        }))
    }

    pub fn logistic(labels: DenseVector, scale: f64) -> Result<Self> {
        if let Some(i) = labels.iter().position(|&l| l != 1.0 && l != -1.0) {
            return Err(Error::InvalidParameter(format!(
                "logistic label {i} is {}, expected ±1",
                labels[i]
            )));
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "logistic scale must be positive, got {scale}"
            )));
        }
        Ok(Atom::Logistic { labels, scale })
    }

    /// Logistic loss averaged over the samples (`scale = 1/n`).
    pub fn logistic_mean(labels: DenseVector) -> Result<Self> {
        let n = labels.dim().max(1) as f64;
        Self::logistic(labels, 1.0 / n)
    }

    pub fn elastic_net(lambda1: f64, lambda2: f64, dim: usize) -> Result<Self> {
        if !(lambda1 >= 0.0) || !lambda1.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "elastic_net needs lambda1 >= 0, got {lambda1}"
            )));
        }
        if !(lambda2 > 0.0) || !lambda2.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "elastic_net needs lambda2 > 0 for a differentiable conjugate, got {lambda2}"
            )));
        }
        Ok(Atom::ElasticNet {
            lambda1,
            lambda2,
            dim,
        })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Atom::Zero { .. } => "zero",
            Atom::QuadraticResidual { .. } => "quadratic_residual",
            Atom::ScaledSqNorm(_) => "scaled_sqnorm",
            Atom::Logistic { .. } => "logistic",
            Atom::ElasticNet { .. } => "elastic_net",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Atom::Zero { dim } | Atom::ElasticNet { dim, .. } => *dim,
            Atom::QuadraticResidual { b } => b.dim(),
            Atom::ScaledSqNorm(s) => s.b.cols(),
            Atom::Logistic { labels, .. } => labels.dim(),
        }
    }

    pub fn capabilities(&self) -> Capabilities {
        use Capabilities as C;
        match self {
            Atom::Zero { .. } => C::VALUE | C::GRAD | C::CONJ_VALUE | C::PROX,
            Atom::QuadraticResidual { .. } | Atom::ScaledSqNorm(_) => C::all(),
            Atom::Logistic { .. } => C::VALUE | C::GRAD | C::CONJ_VALUE | C::PROX,
            Atom::ElasticNet { .. } => C::VALUE | C::CONJ_VALUE | C::CONJ_GRAD | C::PROX,
        }
    }

    pub fn has(&self, caps: Capabilities) -> bool {
        self.capabilities().contains(caps)
    }

    fn require(&self, cap: Capabilities, name: &'static str) -> Result<()> {
        if self.has(cap) {
            Ok(())
        } else {
            Err(Error::MissingCapability {
                atom: self.kind(),
                capability: name,
            })
        }
    }

    fn check_dim(&self, v: &[f64]) -> Result<()> {
        if v.len() == self.dim() {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "{} has dim {}, argument has dim {}",
                self.kind(),
                self.dim(),
                v.len()
            )))
        }
    }

    /// True when the gradient is an affine map.
    pub fn has_affine_grad(&self) -> bool {
        matches!(
            self,
            Atom::Zero { .. } | Atom::QuadraticResidual { .. } | Atom::ScaledSqNorm(_)
        )
    }

    /// True when the conjugate gradient is an affine map.
    pub fn has_affine_conj_grad(&self) -> bool {
        matches!(self, Atom::QuadraticResidual { .. } | Atom::ScaledSqNorm(_))
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(match self {
            Atom::Zero { .. } => 0.0,
            Atom::QuadraticResidual { b } => {
                0.5 * compensated_sum(x.iter().zip(b.iter()).map(|(xi, bi)| (xi - bi) * (xi - bi)))
            }
            Atom::ScaledSqNorm(s) => 0.5 * s.lambda * s.b.matvec(x)?.norm_sq(),
            Atom::Logistic { labels, scale } => {
                scale
                    * compensated_sum(
                        x.iter()
                            .zip(labels.iter())
                            .map(|(xi, li)| softplus(li * xi)),
                    )
            }
            Atom::ElasticNet {
                lambda1, lambda2, ..
            } => {
                let l1 = compensated_sum(x.iter().map(|v| v.abs()));
                let l2 = compensated_sum(x.iter().map(|v| v * v));
                lambda1 * l1 + 0.5 * lambda2 * l2
            }
        })
    }

    pub fn grad(&self, x: &[f64]) -> Result<DenseVector> {
        self.require(Capabilities::GRAD, "grad")?;
        self.check_dim(x)?;
        Ok(match self {
            Atom::Zero { dim } => DenseVector::zeros(*dim),
            Atom::QuadraticResidual { b } => DenseVector::from_fn(x.len(), |i| x[i] - b[i]),
            Atom::ScaledSqNorm(s) => s.curvature.matvec(x)?,
            Atom::Logistic { labels, scale } => {
                DenseVector::from_fn(x.len(), |i| scale * labels[i] * sigmoid(labels[i] * x[i]))
            }
            Atom::ElasticNet { .. } => unreachable!("capability checked"),
        })
    }

    /// Diagonal of the Hessian, for the separable smooth atoms.
    pub fn hessian_diag(&self, x: &[f64]) -> Option<DenseVector> {
        match self {
            Atom::Zero { dim } => Some(DenseVector::zeros(*dim)),
            Atom::QuadraticResidual { b } => Some(DenseVector::filled(b.dim(), 1.0)),
            Atom::Logistic { labels, scale } => Some(DenseVector::from_fn(x.len(), |i| {
                let s = sigmoid(labels[i] * x[i]);
                scale * s * (1.0 - s)
            })),
            _ => None,
        }
    }

    /// `f*(v)`, possibly `+∞`.
    pub fn conj_value(&self, v: &[f64]) -> Result<f64> {
        self.require(Capabilities::CONJ_VALUE, "conj_value")?;
        self.check_dim(v)?;
        Ok(match self {
            Atom::Zero { .. } => {
                if v.iter().all(|&vi| vi == 0.0) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Atom::QuadraticResidual { b } => compensated_sum(
                v.iter()
                    .zip(b.iter())
                    .map(|(vi, bi)| 0.5 * vi * vi + vi * bi),
            ),
            Atom::ScaledSqNorm(s) => {
                let u = s.curvature_factor.solve(v)?;
                0.5 * crate::linalg::dot_compensated(v, &u)
            }
            Atom::Logistic { labels, scale } => {
                scale
                    * compensated_sum(
                        v.iter()
                            .zip(labels.iter())
                            .map(|(vi, li)| softplus_conj(vi * li / scale)),
                    )
            }
            Atom::ElasticNet {
                lambda1, lambda2, ..
            } => compensated_sum(v.iter().map(|vi| {
                let t = (vi.abs() - lambda1).max(0.0);
                t * t / (2.0 * lambda2)
            })),
        })
    }

    pub fn conj_grad(&self, v: &[f64]) -> Result<DenseVector> {
        self.require(Capabilities::CONJ_GRAD, "conj_grad")?;
        self.check_dim(v)?;
        Ok(match self {
            Atom::QuadraticResidual { b } => DenseVector::from_fn(v.len(), |i| v[i] + b[i]),
            Atom::ScaledSqNorm(s) => s.curvature_factor.solve(v)?,
            Atom::ElasticNet {
                lambda1, lambda2, ..
            } => DenseVector::from_fn(v.len(), |i| soft_threshold(v[i], *lambda1) / lambda2),
            _ => unreachable!("capability checked"),
        })
    }

    /// `(I + ρ∂f)^{-1} v`, the minimizer of `f(u) + ‖u − v‖²/(2ρ)`.
    pub fn prox(&self, rho: f64, v: &[f64]) -> Result<DenseVector> {
        self.prepare_prox(rho)?.apply(v)
    }

    /// Prox with any factorization done once, for repeated use at a fixed `rho`.
    pub fn prepare_prox(&self, rho: f64) -> Result<PreparedProx<'_>> {
        self.require(Capabilities::PROX, "prox")?;
        if !(rho >= 0.0) || !rho.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "prox needs rho >= 0, got {rho}"
            )));
        }
        let factor = match self {
            Atom::ScaledSqNorm(s) if rho > 0.0 => {
                Some(Cholesky::factor(&s.curvature.scaled(rho).add_diag(1.0))?)
            }
            _ => None,
        };
        Ok(PreparedProx {
            atom: self,
            rho,
            factor,
        })
    }

    /// `(I + ρ∂f*)^{-1} v`, from the prox of `f` by the Moreau identity
    /// `prox_{ρf*}(v) = v − ρ·prox_{f/ρ}(v/ρ)`.
    pub fn conj_prox(&self, rho: f64, v: &[f64]) -> Result<DenseVector> {
        if !(rho > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "conj_prox needs rho > 0, got {rho}"
            )));
        }
        let scaled = DenseVector::from_fn(v.len(), |i| v[i] / rho);
        let inner = self.prox(1.0 / rho, &scaled)?;
        Ok(DenseVector::from_fn(v.len(), |i| v[i] - rho * inner[i]))
    }

    /// `(ρI + ∇f)^{-1} w`, which equals `prox_{f/ρ}(w/ρ)`.
    pub fn grad_resolvent(&self, rho: f64, w: &[f64]) -> Result<DenseVector> {
        if !(rho > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "grad_resolvent needs rho > 0, got {rho}"
            )));
        }
        let scaled = DenseVector::from_fn(w.len(), |i| w[i] / rho);
        self.prox(1.0 / rho, &scaled)
    }

    /// `λ` and `B` of a scaled squared norm.
    pub fn as_scaled_sqnorm(&self) -> Option<(f64, &DenseMatrix)> {
        match self {
            Atom::ScaledSqNorm(s) => Some((s.lambda, &s.b)),
            _ => None,
        }
    }

    /// `λBᵀB` of a scaled squared norm.
    pub fn curvature(&self) -> Option<&DenseMatrix> {
        match self {
            Atom::ScaledSqNorm(s) => Some(&s.curvature),
            _ => None,
        }
    }
}

#[derive(Debug)]
pub struct PreparedProx<'a> {
    atom: &'a Atom,
    rho: f64,
    factor: Option<Cholesky>,
}

impl PreparedProx<'_> {
    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn apply(&self, v: &[f64]) -> Result<DenseVector> {
        self.atom.check_dim(v)?;
        let rho = self.rho;
        if rho == 0.0 {
            return Ok(DenseVector::from(v));
        }
        Ok(match self.atom {
            Atom::Zero { .. } => DenseVector::from(v),
            Atom::QuadraticResidual { b } => {
                DenseVector::from_fn(v.len(), |i| (v[i] + rho * b[i]) / (1.0 + rho))
            }
            Atom::ScaledSqNorm(_) => self
                .factor
                .as_ref()
                .expect("factored for rho > 0")
                .solve(v)?,
            Atom::Logistic { labels, scale } => {
                let mut out = DenseVector::zeros(v.len());
                for i in 0..v.len() {
                    out[i] = logistic_prox_coord(v[i], labels[i], rho * scale)
                        .map_err(|residual| Error::ProxNewton { index: i, residual })?;
                }
                out
            }
            Atom::ElasticNet {
                lambda1, lambda2, ..
            } => elastic_net_prox(v, rho, *lambda1, *lambda2),
        })
    }
}

/// Solves `u − v + w·l·σ(l u) = 0` for `u` by Newton's method safeguarded with
/// bisection on the bracket `[v − w, v + w]`. Returns the final residual on
/// failure.
fn logistic_prox_coord(v: f64, l: f64, w: f64) -> std::result::Result<f64, f64> {
    let residual = |u: f64| u - v + w * l * sigmoid(l * u);
    let tol = PROX_NEWTON_TOL * v.abs().max(1.0);
    let (mut lo, mut hi) = (v - w, v + w);
    let mut u = v - w * l * sigmoid(l * v);
    let mut r = residual(u);
    for _ in 0..PROX_NEWTON_MAX_ITERS {
        if r.abs() <= tol {
            return Ok(u);
        }
        if r > 0.0 {
            hi = u;
        } else {
            lo = u;
        }
        let s = sigmoid(l * u);
        let slope = 1.0 + w * s * (1.0 - s);
        let mut next = u - r / slope;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if next == u {
            break;
        }
        u = next;
        r = residual(u);
    }
    if r.abs() <= tol {
        Ok(u)
    } else {
        Err(r.abs())
    }
}
