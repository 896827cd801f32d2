//! Problem generators, step-size search, benchmark sweeps and plotting for
//! the `hd` command-line tool.

// `!(x > 0.0)` deliberately rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiments;
pub mod generators;
pub mod search;
pub mod svg;

pub use error::{BenchError, Result};
