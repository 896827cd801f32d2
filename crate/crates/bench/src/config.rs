//! JSON problem configurations.

use std::path::Path;

use hd_core::{Atom, Certificate, CertifyMethod, CompositeProblem, DenseMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};
use crate::generators::{self, LogregSpec, DEFAULT_DELTA, DEFAULT_FLIP_FRACTION};

/// A generated problem family, tagged by `"family"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ProblemConfig {
    Ls(LsConfig),
    Logreg(LogregConfig),
    Toy1d,
}

/// Regularized least squares `½‖Ay − b‖² + (λ/2)‖By‖²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LsConfig {
    pub n: usize,
    /// Defaults to `n`.
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default = "one")]
    pub lambda: f64,
    #[serde(default)]
    pub b: BSpec,
    #[serde(default)]
    pub seed: u64,
    /// Replace `A, B` by `AM^j, BM^j`.
    #[serde(default)]
    pub conditioning: Option<ConditioningSpec>,
}

/// The regularizer's matrix `B`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BSpec {
    #[default]
    Identity,
    /// `B = diag(d)`
    Diagonal(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditioningSpec {
    pub j: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
}

/// Elastic-net logistic regression with a target feature condition number.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogregConfig {
    #[serde(default = "default_logreg_n")]
    pub n: usize,
    #[serde(default = "default_logreg_m")]
    pub m: usize,
    #[serde(default = "default_logreg_lambda")]
    pub lambda1: f64,
    #[serde(default = "default_logreg_lambda")]
    pub lambda2: f64,
    #[serde(default = "default_target_cond")]
    pub target_cond: f64,
    #[serde(default = "default_flip_fraction")]
    pub flip_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}
fn default_delta() -> f64 {
    DEFAULT_DELTA
}
fn default_logreg_n() -> usize {
    LogregSpec::default().n
}
fn default_logreg_m() -> usize {
    LogregSpec::default().m
}
fn default_logreg_lambda() -> f64 {
    LogregSpec::default().lambda1
}
fn default_target_cond() -> f64 {
    LogregSpec::default().target_cond
}
fn default_flip_fraction() -> f64 {
    DEFAULT_FLIP_FRACTION
}

impl From<&LogregConfig> for LogregSpec {
    fn from(c: &LogregConfig) -> Self {
        LogregSpec {
            n: c.n,
            m: c.m,
            lambda1: c.lambda1,
            lambda2: c.lambda2,
            target_cond: c.target_cond,
            flip_fraction: c.flip_fraction,
            seed: c.seed,
        }
    }
}

/// A problem built from a configuration.
#[derive(Clone, Debug)]
pub struct BuiltProblem {
    pub problem: CompositeProblem,
    pub cert: Certificate,
    /// `cond(AᵀA + λBᵀB)` for least squares, `cond(AᵀA)` for logistic
    /// regression.
    pub condition_number: Option<f64>,
}

impl ProblemConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| BenchError::Config(format!("invalid problem config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| {
            BenchError::Config(format!("{}: invalid problem config: {e}", path.display()))
        })
    }

    /// Generates the problem and its certificate. The same configuration
    /// always produces bit-identical data.
    pub fn build(&self) -> Result<BuiltProblem> {
        match self {
            ProblemConfig::Ls(c) => build_ls(c),
            ProblemConfig::Logreg(c) => {
                let inst = generators::gen_logreg(&LogregSpec::from(c))?;
                Ok(BuiltProblem {
                    problem: inst.problem,
                    cert: inst.cert,
                    condition_number: Some(inst.condition_number),
                })
            }
            ProblemConfig::Toy1d => {
                let (problem, cert) = generators::toy1d()?;
                Ok(BuiltProblem {
                    problem,
                    cert,
                    condition_number: Some(2.0),
                })
            }
        }
    }
}

fn build_ls(c: &LsConfig) -> Result<BuiltProblem> {
    let m = c.m.unwrap_or(c.n);
    let (mut problem, mut cert) = generators::gen_ls(c.n, m, c.lambda, c.seed)?;
    if let BSpec::Diagonal(d) = &c.b {
        if d.len() != m {
            return Err(BenchError::Config(format!(
                "diagonal B has {} entries, expected m = {m}",
                d.len()
            )));
        }
        let g = Atom::scaled_sqnorm(c.lambda, DenseMatrix::diag(d))
            .map_err(|e| BenchError::Config(e.to_string()))?;
        problem = problem.with_atoms(problem.h().clone(), g)?;
        cert = hd_core::certify(&problem, CertifyMethod::ClosedForm)?;
    }
    match &c.conditioning {
        None => {
            let condition_number = generators::quadratic_condition(&problem)?;
            Ok(BuiltProblem {
                problem,
                cert,
                condition_number: Some(condition_number),
            })
        }
        Some(spec) => {
            let last =
                generators::conditioning_sequence(&problem, &cert, spec.j, spec.delta, c.seed)?
                    .pop()
                    .expect("sequence includes j = 0");
            Ok(BuiltProblem {
                problem: last.problem,
                cert: last.cert,
                condition_number: Some(last.condition_number),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_each_family() {
        let ls =
            ProblemConfig::from_json(r#"{"family":"ls","n":4,"lambda":0.5,"seed":3}"#).unwrap();
        assert!(matches!(&ls, ProblemConfig::Ls(c) if c.m.is_none() && c.lambda == 0.5));
        let lr = ProblemConfig::from_json(r#"{"family":"logreg","target_cond":100}"#).unwrap();
        assert!(
            matches!(&lr, ProblemConfig::Logreg(c) if c.n == 200 && c.m == 100 && c.lambda1 == 0.01)
        );
        assert_eq!(
            ProblemConfig::from_json(r#"{"family":"toy1d"}"#).unwrap(),
            ProblemConfig::Toy1d
        );
    }

    #[test]
    fn rejects_unknown_family_and_fields() {
        assert!(ProblemConfig::from_json(r#"{"family":"svm","n":3}"#)
            .unwrap_err()
            .is_config());
        assert!(
            ProblemConfig::from_json(r#"{"family":"ls","n":3,"lamda":1}"#)
                .unwrap_err()
                .is_config()
        );
        assert!(ProblemConfig::from_json(r#"{"n":3}"#)
            .unwrap_err()
            .is_config());
    }

    #[test]
    fn round_trips_through_json() {
        let c = ProblemConfig::Ls(LsConfig {
            n: 5,
            m: Some(3),
            lambda: 2.0,
            b: BSpec::Diagonal(vec![1.0, 2.0, 3.0]),
            seed: 9,
            conditioning: Some(ConditioningSpec { j: 2, delta: 0.1 }),
        });
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(ProblemConfig::from_json(&text).unwrap(), c);
    }

    #[test]
    fn build_is_deterministic() {
        let c = ProblemConfig::from_json(
            r#"{"family":"ls","n":6,"m":4,"seed":2,"conditioning":{"j":2}}"#,
        )
        .unwrap();
        let a = c.build().unwrap();
        let b = c.build().unwrap();
        assert_eq!(a.problem.a(), b.problem.a());
        assert_eq!(a.cert.y_star, b.cert.y_star);
    }

    #[test]
    fn diagonal_b_must_match_m() {
        let c =
            ProblemConfig::from_json(r#"{"family":"ls","n":3,"b":{"diagonal":[1,2]}}"#).unwrap();
        assert!(c.build().unwrap_err().is_config());
        let c =
            ProblemConfig::from_json(r#"{"family":"ls","n":2,"b":{"diagonal":[1,2]}}"#).unwrap();
        assert!(c.build().is_ok());
    }

    #[test]
    fn nonpositive_lambda_is_config_error() {
        let c = ProblemConfig::from_json(r#"{"family":"ls","n":3,"lambda":0}"#).unwrap();
        assert!(c.build().unwrap_err().is_config());
    }
}
