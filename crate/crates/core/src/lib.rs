//! Hamiltonian descent for composite convex problems `minimize h(Ay) + g(y)`.
//!
//! The crate provides the convex atoms, the composite problem with its dual and
//! gap quantities, the Hamiltonian-descent flows with their explicit, implicit,
//! ADMM-form and PDHG-form discretizations, baseline first-order methods, and a
//! suite of numerical checks of the underlying identities and rate bounds.

// `!(x > 0.0)` deliberately rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod atoms;
pub mod baselines;
pub mod error;
pub mod flows;
pub mod linalg;
pub mod problem;
pub mod rng;
pub mod verify;

pub use atoms::{Atom, Capabilities};
pub use error::{Error, LinalgError, Result};
pub use linalg::{DenseMatrix, DenseVector};
pub use problem::{
    certify, Certificate, CertifyMethod, CompositeProblem, Parameterization, PrimalDualPoint,
};
pub use rng::Rng;
