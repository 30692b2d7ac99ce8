//! Variational solver and limit verification for the Neumann problem of the
//! variable-exponent Laplacian with an infinite exponent on an interior
//! rectangle.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is pure
//! computation over a rectangular grid:
//!
//! - [`domain`]: grid geometry, region labels, normals, discrete calculus.
//! - [`exponent`]: the variable exponent and its truncations at level `k`.
//! - [`functional`]: modulars, Luxemburg norms and the discrete energies.
//! - [`solver`]: mean-zero energy minimisation and the continuation in `k`.
//! - [`verify`]: residual certificates for a candidate limit field.
//!
//! IO, configuration and the command-line front end live in the `varinf`
//! crate.

#![no_std]
// negated comparisons are used deliberately so that NaN fails every check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod domain;
pub mod error;
pub mod exponent;
pub mod field;
pub mod functional;
pub mod math;
pub mod solver;
pub mod verify;

pub use domain::{build_grid, DomainSpec, Grid, NormalSet, Rect, Region};
pub use error::Error;
pub use exponent::{conjugate, ExponentField, ExponentSpec, TruncatedExponent};
pub use field::{FieldExpr, ScalarField};
pub use functional::EnergyBreakdown;
pub use solver::{
    extract_limit, minimize_ik, project_mean_zero, run_continuation, ContinuationSchedule,
    Direction, LimitResult, SolveResult, SolverConfig,
};

/// Two-component vector used for gradients and normals.
pub type Vec2 = [f64; 2];
