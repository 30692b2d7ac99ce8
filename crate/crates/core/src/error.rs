use alloc::boxed::Box;
use core::fmt;

use crate::field::ScalarField;

/// Errors raised by grid construction, exponent validation, the energies,
/// the solver and the verification battery.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A rectangle is empty, inverted or has non-finite corners.
    InvalidRect(&'static str),
    /// Fewer than two nodes along an axis.
    ResolutionTooSmall { nx: usize, ny: usize },
    /// The inner rectangle is not compactly inside the outer one.
    DRectTouchesBoundary,
    /// An inner-rectangle side does not coincide with a grid line.
    DRectOffGrid { side: &'static str, offset: f64 },
    /// A node index is out of range.
    NodeOutOfRange { node: usize, nodes: usize },
    /// `normal_set` was asked for a node that is not on a boundary.
    NotBoundaryNode { node: usize },
    /// The requested direction is not one of the node's outward normals.
    NotInNormalSet { node: usize },
    /// Fewer than two nodes are available along the inward normal.
    StencilOutOfDomain { node: usize },
    /// Some finite-exponent node has `p <= 2`.
    PMinusTooSmall { p_minus: f64 },
    /// An exponent value outside the inner region is not finite.
    PNotFinite { node: usize },
    /// Truncation level not strictly above the largest finite exponent.
    KTooSmall { k: f64, p_plus: f64 },
    /// A per-node table or field has the wrong number of entries.
    ShapeMismatch { expected: usize, found: usize },
    /// A field value is NaN or infinite.
    NonFiniteValue { node: usize },
    /// `p ln|f|` exceeded the power cap at quadrature point `point`.
    ModularOverflow { point: usize },
    /// No bracket for the Luxemburg norm within 200 doublings.
    BracketFailure,
    /// The schedule is empty, not increasing, or starts at or below `p_plus`.
    InvalidSchedule(&'static str),
    /// A solver parameter is out of range.
    InvalidSolverConfig(&'static str),
    /// The iteration budget was exhausted; carries the best iterate.
    NoConvergence {
        iterations: usize,
        residual: f64,
        best: Box<ScalarField>,
    },
    /// The line search shrank the step to nothing; carries the best iterate.
    LineSearchStall {
        iterations: usize,
        residual: f64,
        best: Box<ScalarField>,
    },
    /// A continuation step failed at truncation level `k`.
    AtLevel { k: f64, source: Box<Error> },
    /// Limit extraction needs at least two solves.
    TooFewResults { found: usize },
    /// The Luxemburg exponent `m` must exceed `p_minus`.
    MTooSmall { m: f64, p_minus: f64 },
    /// A randomized audit found an admissible field with lower limit energy.
    MinimalityViolated {
        trial: usize,
        excess: f64,
        witness: Box<ScalarField>,
    },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidRect(what) => write!(f, "invalid rectangle: {what}"),
            Error::ResolutionTooSmall { nx, ny } => {
                write!(f, "resolution {nx}x{ny} needs at least 2 nodes per axis")
            }
            Error::DRectTouchesBoundary => write!(
                f,
                "inner rectangle must lie at least one grid cell inside the outer rectangle"
            ),
            Error::DRectOffGrid { side, offset } => write!(
                f,
                "inner rectangle side {side} is {offset:e} cells away from the nearest grid line"
            ),
            Error::NodeOutOfRange { node, nodes } => {
                write!(f, "node {node} out of range (grid has {nodes} nodes)")
            }
            Error::NotBoundaryNode { node } => {
                write!(
                    f,
                    "node {node} lies on neither the outer nor the inner boundary"
                )
            }
            Error::NotInNormalSet { node } => {
                write!(f, "direction is not an outward normal at node {node}")
            }
            Error::StencilOutOfDomain { node } => {
                write!(f, "no inward difference stencil at node {node}")
            }
            Error::PMinusTooSmall { p_minus } => {
                write!(f, "exponent infimum {p_minus} must exceed the dimension 2")
            }
            Error::PNotFinite { node } => {
                write!(
                    f,
                    "exponent is not finite at node {node} outside the inner region"
                )
            }
            Error::KTooSmall { k, p_plus } => {
                write!(
                    f,
                    "truncation level {k} must exceed the exponent supremum {p_plus}"
                )
            }
            Error::ShapeMismatch { expected, found } => {
                write!(f, "expected {expected} nodal values, found {found}")
            }
            Error::NonFiniteValue { node } => write!(f, "non-finite value at node {node}"),
            Error::ModularOverflow { point } => {
                write!(f, "power overflow at quadrature point {point}")
            }
            Error::BracketFailure => write!(f, "no Luxemburg-norm bracket after 200 doublings"),
            Error::InvalidSchedule(what) => write!(f, "invalid continuation schedule: {what}"),
            Error::InvalidSolverConfig(what) => write!(f, "invalid solver configuration: {what}"),
            Error::NoConvergence {
                iterations,
                residual,
                ..
            } => write!(
                f,
                "no convergence after {iterations} iterations (stationarity residual {residual:e})"
            ),
            Error::LineSearchStall {
                iterations,
                residual,
                ..
            } => write!(
                f,
                "line search stalled at iteration {iterations} (stationarity residual {residual:e})"
            ),
            Error::AtLevel { k, source } => write!(f, "at truncation level k = {k}: {source}"),
            Error::TooFewResults { found } => {
                write!(f, "limit extraction needs at least 2 solves, got {found}")
            }
            Error::MTooSmall { m, p_minus } => {
                write!(
                    f,
                    "monitor exponent m = {m} must exceed p_minus = {p_minus}"
                )
            }
            Error::MinimalityViolated { trial, excess, .. } => write!(
                f,
                "trial {trial} found an admissible field with limit energy lower by {excess:e}"
            ),
        }
    }
}

impl core::error::Error for Error {
    fn source(&self) -> Option<&(dyn core::error::Error + 'static)> {
        match self {
            Error::AtLevel { source, .. } => Some(source.as_ref()),
            _ => None,
        }
    }
}

impl Error {
    /// The innermost error, looking through [`Error::AtLevel`].
    pub fn root(&self) -> &Error {
        match self {
            Error::AtLevel { source, .. } => source.root(),
            other => other,
        }
    }
}
