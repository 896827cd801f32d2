//! Independent numerical checks of the identities, lemmas and rate bounds the
//! library relies on. Each check returns a [`CheckReport`]; tolerances are
//! constants of this module, not parameters.

mod atoms;
mod dynamics;
pub mod instances;
mod resolvents;

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;

pub use atoms::{
    conjugate_inverse_check, elastic_net_conjugate_check, fd_conj_grad_check, fd_grad_check,
    fd_hamiltonian_check, fenchel_young_check, prox_optimality_check,
};
pub use dynamics::{
    admm_fixed_point_check, affine_invariance_check, descent_inequality_check,
    explicit_equivariance_check, gap_identity_check, gap_points, gd_invariance_check,
    hessian_extremes, pdhg_fixed_point_check, rate_envelope_check, GdExpectation, RateScheme,
};
pub use resolvents::{
    moreau_check, moreau_random_instances, moreau_residual, single_valued_check,
    single_valued_random_instances, MoreauAtom,
};

pub const FD_STEP: f64 = 1e-6;
pub const FD_REL_TOL: f64 = 1e-4;
pub const EN_CONJ_GRID_POINTS: usize = 100_001;
pub const EN_CONJ_GRID_HALF_WIDTH: f64 = 50.0;
pub const EN_CONJ_GRID_TOL: f64 = 1e-6;
pub const FENCHEL_YOUNG_TOL: f64 = 1e-8;
pub const CONJ_INVERSE_TOL: f64 = 1e-8;
pub const PROX_OPTIMALITY_TOL: f64 = 1e-8;
pub const MOREAU_TOL: f64 = 1e-9;
pub const SINGLE_VALUED_TOL: f64 = 1e-9;
pub const DESCENT_TOL: f64 = 1e-8;
pub const GAP_IDENTITY_TOL: f64 = 1e-10;
pub const AFFINE_INVARIANCE_TOL: f64 = 1e-6;
pub const GD_DISAGREEMENT_MIN: f64 = 1e-2;
pub const EQUIVARIANCE_TOL: f64 = 1e-10;
pub const IMPLICIT_RATE_TOL: f64 = 1e-8;
pub const STRONG_RATE_TOL: f64 = 1e-12;
pub const AVERAGED_RATE_TOL: f64 = 1e-9;
pub const ADMM_FIXED_POINT_TOL: f64 = 1e-9;
pub const PDHG_FIXED_POINT_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check_name: String,
    pub instances_run: usize,
    /// Largest normalized violation seen; `NaN` if a check errored.
    pub max_violation: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Error message when the check could not run to completion.
    pub note: Option<String>,
}

impl CheckReport {
    pub fn new(
        check_name: impl Into<String>,
        instances_run: usize,
        max_violation: f64,
        tolerance: f64,
    ) -> Self {
        Self {
            check_name: check_name.into(),
            instances_run,
            max_violation,
            tolerance,
            pass: max_violation <= tolerance,
            note: None,
        }
    }

    fn failed(check_name: impl Into<String>, err: impl fmt::Display) -> Self {
        Self {
            check_name: check_name.into(),
            instances_run: 0,
            max_violation: f64::NAN,
            tolerance: 0.0,
            pass: false,
            note: Some(err.to_string()),
        }
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} instances={} max_violation={:.3e} tolerance={:.1e}",
            if self.pass { "PASS" } else { "FAIL" },
            self.check_name,
            self.instances_run,
            self.max_violation,
            self.tolerance
        )?;
        if let Some(note) = &self.note {
            write!(f, " ({note})")?;
        }
        Ok(())
    }
}

/// Running maximum that stays `NaN` once a `NaN` is seen.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Worst {
    pub count: usize,
    pub max: f64,
}

impl Worst {
    pub fn push(&mut self, v: f64) {
        self.count += 1;
        if v.is_nan() || self.max.is_nan() {
            self.max = f64::NAN;
        } else if v > self.max {
            self.max = v;
        }
    }

    /// Records a violation without counting a new instance.
    pub fn bump(&mut self, v: f64) {
        let count = self.count;
        self.push(v);
        self.count = count;
    }

    pub fn report(self, name: &str, tolerance: f64) -> CheckReport {
        CheckReport::new(name, self.count, self.max, tolerance)
    }
}

/// Merges reports into one, keeping the worst normalized violation.
pub(crate) fn merge(name: &str, reports: Vec<CheckReport>, tolerance: f64) -> CheckReport {
    let mut w = Worst::default();
    for r in &reports {
        w.max = if r.max_violation.is_nan() || w.max.is_nan() {
            f64::NAN
        } else {
            w.max.max(r.max_violation)
        };
        w.count += r.instances_run;
    }
    w.report(name, tolerance)
}

type CheckFn = Box<dyn Fn(u64) -> Result<CheckReport> + Send + Sync>;

fn registry() -> Vec<(&'static str, CheckFn)> {
    vec![
        ("fd_grad", Box::new(atoms::default_fd_grad)),
        ("fd_conj_grad", Box::new(atoms::default_fd_conj_grad)),
        ("fd_hamiltonian", Box::new(atoms::default_fd_hamiltonian)),
        (
            "elastic_net_conjugate",
            Box::new(atoms::default_elastic_net_conjugate),
        ),
        ("fenchel_young", Box::new(atoms::default_fenchel_young)),
        (
            "conjugate_inverse",
            Box::new(atoms::default_conjugate_inverse),
        ),
        ("prox_optimality", Box::new(atoms::default_prox_optimality)),
        (
            "moreau_quadratic",
            Box::new(|s| resolvents::default_moreau(s, MoreauAtom::Quadratic)),
        ),
        (
            "moreau_elastic_net",
            Box::new(|s| resolvents::default_moreau(s, MoreauAtom::ElasticNet)),
        ),
        ("single_valued", Box::new(resolvents::default_single_valued)),
        ("descent_inequality", Box::new(dynamics::default_descent)),
        ("gap_identity", Box::new(dynamics::default_gap_identity)),
        (
            "affine_invariance_hd",
            Box::new(dynamics::default_affine_invariance),
        ),
        (
            "gd_non_invariance",
            Box::new(|s| dynamics::default_gd_invariance(s, false)),
        ),
        (
            "gd_orthogonal_invariance",
            Box::new(|s| dynamics::default_gd_invariance(s, true)),
        ),
        (
            "explicit_equivariance",
            Box::new(dynamics::default_equivariance),
        ),
        (
            "rate_implicit",
            Box::new(|s| dynamics::default_rate(s, dynamics::DefaultRate::Implicit)),
        ),
        (
            "rate_explicit_strong",
            Box::new(|s| dynamics::default_rate(s, dynamics::DefaultRate::Strong)),
        ),
        (
            "rate_explicit_averaged",
            Box::new(|s| dynamics::default_rate(s, dynamics::DefaultRate::Averaged)),
        ),
        (
            "admm_fixed_point",
            Box::new(dynamics::default_admm_fixed_point),
        ),
        (
            "pdhg_fixed_point",
            Box::new(dynamics::default_pdhg_fixed_point),
        ),
    ]
}

/// Names of the checks [`run_all`] performs, sorted.
pub fn check_names() -> Vec<&'static str> {
    let mut names: Vec<_> = registry().into_iter().map(|(n, _)| n).collect();
    names.sort_unstable();
    names
}

/// Runs every check in parallel from `seed` and returns the reports sorted by
/// name. A check that errors is reported as failed with the error as its note.
pub fn run_all(seed: u64) -> Vec<CheckReport> {
    let mut reports: Vec<CheckReport> = registry()
        .into_par_iter()
        .map(|(name, check)| match check(seed) {
            Ok(mut r) => {
                r.check_name = name.to_string();
                r
            }
            Err(e) => CheckReport::failed(name, e),
        })
        .collect();
    reports.sort_by(|a, b| a.check_name.cmp(&b.check_name));
    reports
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_pass_follows_tolerance() {
        assert!(CheckReport::new("a", 1, 1e-9, 1e-8).pass);
        assert!(!CheckReport::new("a", 1, 1e-7, 1e-8).pass);
        assert!(!CheckReport::new("a", 1, f64::NAN, 1e-8).pass);
    }

    #[test]
    fn worst_keeps_nan() {
        let mut w = Worst::default();
        w.push(1.0);
        w.push(f64::NAN);
        w.push(2.0);
        assert!(w.max.is_nan());
        assert_eq!(w.count, 3);
    }

    #[test]
    fn names_are_unique_and_sorted() {
        let names = check_names();
        let mut dedup = names.clone();
        dedup.dedup();
        assert_eq!(names, dedup);
    }
}
