use alloc::string::String;

use crate::C64;

/// Errors raised by the discretization and verification routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error(
        "ellipticity violated on element {element}: smallest Hermitian eigenvalue {value:e} ≤ 0"
    )]
    Ellipticity { element: usize, value: f64 },

    #[error("vector is not in the operator domain: interior residual {residual:e} exceeds {tolerance:e}")]
    NotInOperatorDomain { residual: f64, tolerance: f64 },

    #[error("coercivity target {target} exceeds the principal ellipticity bound {bound}")]
    InfeasibleCoercivity { target: f64, bound: f64 },

    #[error("resolvent violation at λ = {lambda}: margin {margin:e} ≤ {tolerance:e}")]
    ResolventViolation {
        lambda: C64,
        margin: f64,
        tolerance: f64,
    },

    #[error("contour of radius {radius} around {center} reaches the Dirichlet spectrum (distance {distance:e})")]
    ContourViolation {
        center: C64,
        radius: f64,
        distance: f64,
    },

    #[error("derivative order {requested} is not available (limit {limit})")]
    Order { requested: usize, limit: usize },

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("degenerate seed: {0}")]
    DegenerateSeed(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = core::result::Result<T, Error>;
