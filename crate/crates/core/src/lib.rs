//! Discrete Dirichlet-to-Neumann machinery for non-self-adjoint second-order
//! elliptic operators with (possibly non-local) Robin boundary conditions.
//!
//! The crate discretizes the divergence-form operator
//!
//! ```text
//! A = -Σ ∂_k c_kl ∂_l + Σ c_k ∂_k - Σ ∂_k b_k + c_0
//! ```
//!
//! with P1 finite elements on structured interval and rectangle meshes and
//! provides
//!
//! - the sesquilinear form and its dual as complex matrices ([`assembly`]),
//! - Dirichlet and Robin realizations as matrix pencils ([`realizations`]),
//! - the Dirichlet-to-Neumann map `D(λ)` as a boundary Schur complement,
//!   together with its derivatives computed by an exact Taylor recurrence and
//!   by a Cauchy contour integral ([`dtn`]),
//! - Jordan chains of pencils and of holomorphic matrix functions ([`keldysh`]),
//! - verification reports tying Jordan chains of the Robin realization to
//!   Jordan chains of `λ ↦ D(λ) - B` ([`verify`]).
//!
//! The crate is `no_std` and only needs an allocator.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod assembly;
pub mod dtn;
mod error;
pub mod keldysh;
pub mod linalg;
pub mod mesh;
pub mod realizations;
pub mod verify;

pub use error::{Error, Result};

/// Complex scalar used throughout the crate.
pub type C64 = num_complex::Complex64;
/// Dense complex matrix.
pub type CMat = nalgebra::DMatrix<C64>;
/// Dense complex vector.
pub type CVec = nalgebra::DVector<C64>;

pub use assembly::{
    assemble_forms, conormal, ellipticity_certificate, trace, CoefficientSet, ConormalVector,
    CoordinateConvention, FormMatrices, FormSide,
};
pub use dtn::{
    adjoint_dtn_eval, dtn_derivatives_contour, dtn_derivatives_taylor, dtn_eval, dtn_nodal,
    DerivativeMethod, DtnDerivatives,
};
pub use keldysh::{
    keldysh_chains, keldysh_chains_from_taylor, make_defective_boundary_operator,
    pencil_jordan_chains, ChainOptions, JordanChain, KeldyshChain,
};
pub use mesh::{build_interval_mesh, build_rectangle_mesh, classify_dofs, DiscreteDomain, Element};
pub use realizations::{
    dirichlet_pencil, in_resolvent_set, robin_pencil, solve_homogeneous_bvp,
    solve_inhomogeneous_bvp, BoundaryOperator, DirichletPencil, ResolventCheck, RobinPencil,
};
pub use verify::{Check, VerificationReport};

/// Default numerical thresholds shared by the pipeline.
///
/// Every threshold is relative to a scale documented at its point of use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Interior-row consistency of `(f, h, λ)` triples, relative to `‖K‖·‖f‖`.
    pub consistency: f64,
    /// Minimum admissible `σ_min(K_II - λ M_II) / ‖K_II‖₂`.
    pub resolvent: f64,
    /// Relative numerical rank threshold; `None` selects `max(m, n)·ε·σ_max`.
    pub rank: Option<f64>,
    /// Chain-link residual threshold.
    pub chain: f64,
    /// Threshold for the chain correspondence identities.
    pub theorem: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            consistency: 1e-8,
            resolvent: 1e-10,
            rank: None,
            chain: 1e-8,
            theorem: 1e-8,
        }
    }
}
