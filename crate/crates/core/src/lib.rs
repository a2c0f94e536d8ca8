//! DtN-map marching solver for the non-homogeneous Helmholtz equation
//! `∂²_z u + L u = f` in waveguides made of uniform segments.
//!
//! The pipeline is: [`model`] describes the problem, [`transverse`] builds
//! the discrete transverse operator and its square root, [`dtn`] computes
//! one Dirichlet-to-Neumann map per distinct segment, [`march`] runs the
//! Riccati recurrence and recovers the field, and [`oracle`] solves the same
//! discretization directly for verification.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod dtn;
pub mod error;
pub mod linalg;
pub mod march;
pub mod model;
pub mod oracle;
pub mod transverse;

pub use error::{Error, Result};
pub use march::{solve, solve_with_cache, SolveResult};
pub use model::{parse_problem, WaveguideProblem};
pub use oracle::direct_solve;

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

/// Stable-within-a-process digest of a value's debug representation.
pub(crate) fn fingerprint<T: std::fmt::Debug>(value: &T) -> u64 {
    let mut h = DefaultHasher::new();
    format!("{value:?}").hash(&mut h);
    h.finish()
}
