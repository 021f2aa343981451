//! P1 assembly of the sesquilinear form
//!
//! ```text
//! a(f, g) = Σ ∫ c_kl ∂_l f conj(∂_k g) + Σ ∫ c_k ∂_k f conj(g)
//!         + Σ ∫ b_k f conj(∂_k g)     + ∫ c_0 f conj(g)
//! ```
//!
//! and of its dual form `a*(f, g) = conj(a(g, f))`, together with the Gram
//! matrices and the co-normal derivative in weak form.
//!
//! Coefficients are constant per element, so every integral is exact. Matrix
//! entries follow `K[i][j] = a(φ_j, φ_i)`, hence `a(f, g) = gᴴ K f`.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::linalg::{self, to_complex};
use crate::mesh::{signed_area, DiscreteDomain, Element};
use crate::realizations::BoundaryOperator;
use crate::{CMat, CVec, Error, Result, Tolerances, C64};

/// Piecewise-constant coefficients, one entry per mesh element.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    dimension: usize,
    principal: Vec<CMat>,
    b: Vec<CVec>,
    c: Vec<CVec>,
    c0: Vec<C64>,
    mu: f64,
    worst_element: usize,
}

impl CoefficientSet {
    /// Per-element coefficients. `principal[e]` is `d × d`, `b[e]` and `c[e]`
    /// have length `d`.
    pub fn per_element(
        dimension: usize,
        principal: Vec<CMat>,
        b: Vec<CVec>,
        c: Vec<CVec>,
        c0: Vec<C64>,
    ) -> Result<Self> {
        let n = principal.len();
        for (what, len) in [
            ("b coefficients", b.len()),
            ("c coefficients", c.len()),
            ("c0 coefficients", c0.len()),
        ] {
            if len != n {
                return Err(Error::Dimension {
                    what,
                    expected: n,
                    found: len,
                });
            }
        }
        for p in &principal {
            if p.shape() != (dimension, dimension) {
                return Err(Error::Dimension {
                    what: "principal coefficient size",
                    expected: dimension,
                    found: p.nrows(),
                });
            }
        }
        for v in b.iter().chain(c.iter()) {
            if v.len() != dimension {
                return Err(Error::Dimension {
                    what: "first-order coefficient size",
                    expected: dimension,
                    found: v.len(),
                });
            }
        }
        let (mut mu, mut worst_element) = (f64::INFINITY, 0);
        for (e, p) in principal.iter().enumerate() {
            let m = principal_ellipticity(p);
            if m < mu {
                mu = m;
                worst_element = e;
            }
        }
        Ok(Self {
            dimension,
            principal,
            b,
            c,
            c0,
            mu,
            worst_element,
        })
    }

    /// The same coefficients on every element of `domain`.
    pub fn uniform(
        domain: &DiscreteDomain,
        principal: CMat,
        b: CVec,
        c: CVec,
        c0: C64,
    ) -> Result<Self> {
        let n = domain.elements().len();
        Self::per_element(
            domain.dimension(),
            alloc::vec![principal; n],
            alloc::vec![b; n],
            alloc::vec![c; n],
            alloc::vec![c0; n],
        )
    }

    /// `-Δ`.
    pub fn laplacian(domain: &DiscreteDomain) -> Self {
        Self::schroedinger(domain, C64::new(0.0, 0.0))
    }

    /// `-Δ + c0` with a constant (complex) potential.
    pub fn schroedinger(domain: &DiscreteDomain, c0: C64) -> Self {
        let d = domain.dimension();
        Self::uniform(
            domain,
            CMat::identity(d, d),
            CVec::zeros(d),
            CVec::zeros(d),
            c0,
        )
        .expect("uniform coefficients have consistent sizes")
    }

    /// `-div(C ∇·)` with a constant principal matrix.
    pub fn anisotropic(domain: &DiscreteDomain, matrix: CMat) -> Result<Self> {
        let d = domain.dimension();
        Self::uniform(
            domain,
            matrix,
            CVec::zeros(d),
            CVec::zeros(d),
            C64::new(0.0, 0.0),
        )
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn num_elements(&self) -> usize {
        self.principal.len()
    }

    pub fn principal(&self) -> &[CMat] {
        &self.principal
    }

    pub fn b(&self) -> &[CVec] {
        &self.b
    }

    pub fn c(&self) -> &[CVec] {
        &self.c
    }

    pub fn c0(&self) -> &[C64] {
        &self.c0
    }

    /// Largest `μ` with `Re Σ c_kl ξ_k conj(ξ_l) ≥ μ|ξ|²` on every element.
    pub fn ellipticity_constant(&self) -> f64 {
        self.mu
    }

    /// Coefficients of the dual form: `c_kl → conj(c_lk)`, `b ↔ conj(c)`,
    /// `c0 → conj(c0)`.
    pub fn dual(&self) -> Self {
        Self {
            dimension: self.dimension,
            principal: self.principal.iter().map(|p| p.adjoint()).collect(),
            b: self.c.iter().map(|v| v.conjugate()).collect(),
            c: self.b.iter().map(|v| v.conjugate()).collect(),
            c0: self.c0.iter().map(|z| z.conj()).collect(),
            mu: self.mu,
            worst_element: self.worst_element,
        }
    }

    /// Whether the coefficients are real and the principal part symmetric
    /// with `b = c`, i.e. the form is Hermitian.
    pub fn is_hermitian(&self) -> bool {
        let real = |z: &C64| z.im == 0.0;
        self.principal
            .iter()
            .all(|p| p.iter().all(real) && *p == p.transpose())
            && self.b == self.c
            && self.b.iter().all(|v| v.iter().all(real))
            && self.c0.iter().all(real)
    }
}

/// Smallest eigenvalue of the Hermitian part of a 1×1 or 2×2 matrix.
fn principal_ellipticity(p: &CMat) -> f64 {
    match p.nrows() {
        1 => p[(0, 0)].re,
        2 => {
            let a = p[(0, 0)].re;
            let d = p[(1, 1)].re;
            let off = (p[(0, 1)] + p[(1, 0)].conj()) * 0.5;
            let half = 0.5 * (a - d);
            0.5 * (a + d) - libm::sqrt(half * half + off.norm_sqr())
        }
        _ => linalg::hermitian_eigenvalues(p)[0],
    }
}

/// Which of the two forms a routine acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormSide {
    /// The form `a` and the operator `A`.
    Primal,
    /// The dual form `a*` and the formal adjoint `Ã`.
    Dual,
}

/// Assembled matrices of one discretized problem.
///
/// All Gram matrices are stored as complex matrices with real entries.
#[derive(Debug, Clone)]
pub struct FormMatrices {
    pub dimension: usize,
    /// Matrix of `a`.
    pub k: CMat,
    /// Matrix of `a*`, assembled from the dual coefficients.
    pub k_dual: CMat,
    /// `L₂(Ω)` Gram matrix.
    pub mass: CMat,
    /// `L₂(Γ)` Gram matrix of the boundary nodal functions. In 1D the
    /// boundary is two points with counting measure, so this is the identity.
    pub mass_boundary: CMat,
    /// Stiffness matrix of `-Δ`.
    pub laplace: CMat,
    /// `‖·‖²_{H¹}` Gram matrix, `laplace + mass`.
    pub h1: CMat,
    pub interior: Vec<usize>,
    pub boundary: Vec<usize>,
    /// Ellipticity constant of the principal coefficients.
    pub mu: f64,
    /// Whether `a` is Hermitian (real symmetric coefficients).
    pub hermitian: bool,
    k_norm: f64,
    mass_norm: f64,
}

impl FormMatrices {
    pub fn num_dofs(&self) -> usize {
        self.k.nrows()
    }

    pub fn num_boundary(&self) -> usize {
        self.boundary.len()
    }

    /// The `n_Γ × N` 0/1 matrix selecting boundary nodal values.
    pub fn trace_selector(&self) -> CMat {
        let mut t = CMat::zeros(self.boundary.len(), self.num_dofs());
        for (row, &node) in self.boundary.iter().enumerate() {
            t[(row, node)] = C64::new(1.0, 0.0);
        }
        t
    }

    pub fn stiffness(&self, side: FormSide) -> &CMat {
        match side {
            FormSide::Primal => &self.k,
            FormSide::Dual => &self.k_dual,
        }
    }

    /// Frobenius norm of `K`.
    pub fn k_norm(&self) -> f64 {
        self.k_norm
    }

    /// Frobenius norm of the mass matrix.
    pub fn mass_norm(&self) -> f64 {
        self.mass_norm
    }

    /// Extends a boundary vector by zero to all nodes.
    pub fn extend_boundary(&self, phi: &CVec) -> CVec {
        let mut f = CVec::zeros(self.num_dofs());
        for (i, &node) in self.boundary.iter().enumerate() {
            f[node] = phi[i];
        }
        f
    }

    /// Solves `Mass_boundary x = y`, i.e. converts dual boundary coordinates to
    /// nodal ones.
    pub fn boundary_dual_to_nodal(&self, y: &CMat) -> CMat {
        let lu = self.mass_boundary.clone().lu();
        lu.solve(y)
            .expect("boundary mass matrix is positive definite")
    }

    /// `(f, g)_{L₂(Ω)} = gᴴ M f`.
    pub fn l2_inner(&self, f: &CVec, g: &CVec) -> C64 {
        g.dotc(&(&self.mass * f))
    }
}

struct LocalGeometry {
    grads: Vec<[f64; 2]>,
    measure: f64,
}

fn local_geometry(domain: &DiscreteDomain, element: &Element) -> LocalGeometry {
    let x = domain.nodes();
    match *element {
        Element::Segment([a, b]) => {
            let h = x[b][0] - x[a][0];
            LocalGeometry {
                grads: alloc::vec![[-1.0 / h, 0.0], [1.0 / h, 0.0]],
                measure: h.abs(),
            }
        }
        Element::Triangle(t) => {
            let area = signed_area(x, t);
            let [p0, p1, p2] = [x[t[0]], x[t[1]], x[t[2]]];
            let s = 1.0 / (2.0 * area);
            LocalGeometry {
                grads: alloc::vec![
                    [(p1[1] - p2[1]) * s, (p2[0] - p1[0]) * s],
                    [(p2[1] - p0[1]) * s, (p0[0] - p2[0]) * s],
                    [(p0[1] - p1[1]) * s, (p1[0] - p0[0]) * s],
                ],
                measure: area.abs(),
            }
        }
    }
}

/// Exact P1 mass integral `∫ φ_a φ_b` on an element with `nloc` nodes.
fn local_mass(nloc: usize, measure: f64, a: usize, b: usize) -> f64 {
    let diag = if a == b { 2.0 } else { 1.0 };
    match nloc {
        2 => measure * diag / 6.0,
        _ => measure * diag / 12.0,
    }
}

fn assemble_operator(domain: &DiscreteDomain, coeffs: &CoefficientSet) -> CMat {
    let n = domain.num_nodes();
    let d = domain.dimension();
    let mut k = CMat::zeros(n, n);
    for (e, element) in domain.elements().iter().enumerate() {
        let geo = local_geometry(domain, element);
        let nodes = element.nodes();
        let nloc = nodes.len();
        let phi_integral = geo.measure / nloc as f64;
        let (cp, bv, cv, c0) = (
            &coeffs.principal[e],
            &coeffs.b[e],
            &coeffs.c[e],
            coeffs.c0[e],
        );
        for (ia, &test) in nodes.iter().enumerate() {
            let gi = geo.grads[ia];
            for (ib, &trial) in nodes.iter().enumerate() {
                let gj = geo.grads[ib];
                let mut val = C64::new(0.0, 0.0);
                for kk in 0..d {
                    for ll in 0..d {
                        val += cp[(kk, ll)] * (gj[ll] * gi[kk] * geo.measure);
                    }
                    val += cv[kk] * (gj[kk] * phi_integral);
                    val += bv[kk] * (gi[kk] * phi_integral);
                }
                val += c0 * local_mass(nloc, geo.measure, ia, ib);
                k[(test, trial)] += val;
            }
        }
    }
    k
}

fn assemble_real(domain: &DiscreteDomain, stiffness_weight: f64, mass_weight: f64) -> DMatrix<f64> {
    let n = domain.num_nodes();
    let mut m = DMatrix::zeros(n, n);
    for element in domain.elements() {
        let geo = local_geometry(domain, element);
        let nodes = element.nodes();
        for (ia, &i) in nodes.iter().enumerate() {
            for (ib, &j) in nodes.iter().enumerate() {
                let g = geo.grads[ia][0] * geo.grads[ib][0] + geo.grads[ia][1] * geo.grads[ib][1];
                m[(i, j)] += stiffness_weight * g * geo.measure
                    + mass_weight * local_mass(nodes.len(), geo.measure, ia, ib);
            }
        }
    }
    m
}

fn assemble_boundary_mass(domain: &DiscreteDomain) -> DMatrix<f64> {
    let nb = domain.boundary_nodes().len();
    if domain.dimension() == 1 {
        return DMatrix::identity(nb, nb);
    }
    let x = domain.nodes();
    let mut m = DMatrix::zeros(nb, nb);
    for &[p, q] in domain.boundary_edges() {
        let len = libm::hypot(x[q][0] - x[p][0], x[q][1] - x[p][1]);
        let (bp, bq) = (
            domain
                .boundary_position(p)
                .expect("edge endpoint on boundary"),
            domain
                .boundary_position(q)
                .expect("edge endpoint on boundary"),
        );
        m[(bp, bp)] += len / 3.0;
        m[(bq, bq)] += len / 3.0;
        m[(bp, bq)] += len / 6.0;
        m[(bq, bp)] += len / 6.0;
    }
    m
}

/// Assembles `a`, `a*` and the Gram matrices.
pub fn assemble_forms(domain: &DiscreteDomain, coeffs: &CoefficientSet) -> Result<FormMatrices> {
    if coeffs.num_elements() != domain.elements().len() {
        return Err(Error::Dimension {
            what: "coefficients per element",
            expected: domain.elements().len(),
            found: coeffs.num_elements(),
        });
    }
    if coeffs.dimension() != domain.dimension() {
        return Err(Error::Dimension {
            what: "coefficient dimension",
            expected: domain.dimension(),
            found: coeffs.dimension(),
        });
    }
    if coeffs.mu.is_nan() || coeffs.mu <= 0.0 {
        return Err(Error::Ellipticity {
            element: coeffs.worst_element,
            value: coeffs.mu,
        });
    }
    let k = assemble_operator(domain, coeffs);
    let k_dual = assemble_operator(domain, &coeffs.dual());
    let mass = to_complex(&assemble_real(domain, 0.0, 1.0));
    let laplace = to_complex(&assemble_real(domain, 1.0, 0.0));
    let h1 = to_complex(&assemble_real(domain, 1.0, 1.0));
    let mass_boundary = to_complex(&assemble_boundary_mass(domain));
    let (interior, boundary) = crate::mesh::classify_dofs(domain);
    Ok(FormMatrices {
        dimension: domain.dimension(),
        k_norm: k.norm(),
        mass_norm: mass.norm(),
        k,
        k_dual,
        mass,
        mass_boundary,
        laplace,
        h1,
        interior,
        boundary,
        mu: coeffs.mu,
        hermitian: coeffs.is_hermitian(),
    })
}

fn check_len(what: &'static str, v: &CVec, n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::Dimension {
            what,
            expected: n,
            found: v.len(),
        });
    }
    Ok(())
}

/// Boundary nodal values of `f`.
pub fn trace(f: &CVec, forms: &FormMatrices) -> Result<CVec> {
    check_len("trace argument", f, forms.num_dofs())?;
    Ok(linalg::gather(f, &forms.boundary))
}

/// Coordinates in which a boundary functional is represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoordinateConvention {
    /// Pairings against the boundary nodal functions.
    Dual,
    /// `L₂(Γ)` nodal values, `Mass_boundary⁻¹ · dual`.
    Nodal,
}

/// A co-normal derivative `γ_N f` (or `γ̃_N g` for the dual form).
#[derive(Debug, Clone, PartialEq)]
pub struct ConormalVector {
    pub values: CVec,
    pub convention: CoordinateConvention,
}

impl ConormalVector {
    pub fn to_nodal(&self, forms: &FormMatrices) -> Self {
        match self.convention {
            CoordinateConvention::Nodal => self.clone(),
            CoordinateConvention::Dual => {
                let y = CMat::from_column_slice(self.values.len(), 1, self.values.as_slice());
                let x = forms.boundary_dual_to_nodal(&y);
                Self {
                    values: x.column(0).into_owned(),
                    convention: CoordinateConvention::Nodal,
                }
            }
        }
    }

    pub fn to_dual(&self, forms: &FormMatrices) -> Self {
        match self.convention {
            CoordinateConvention::Dual => self.clone(),
            CoordinateConvention::Nodal => Self {
                values: &forms.mass_boundary * &self.values,
                convention: CoordinateConvention::Dual,
            },
        }
    }

    /// `⟨γ, φ⟩ = φᴴ γ` for a dual-coordinate functional.
    pub fn pair(&self, forms: &FormMatrices, phi: &CVec) -> C64 {
        phi.dotc(&self.to_dual(forms).values)
    }
}

/// Weak co-normal derivative of `f` given the strong action `A f = λ f + h`
/// (or `Ã f = λ f + h` for [`FormSide::Dual`]).
///
/// The returned functional satisfies `a(f, g) - (λ f + h, g) = ⟨γ_N f, Tr g⟩`
/// for every `g`. `λ` is used as given on both sides.
pub fn conormal(
    f: &CVec,
    h: &CVec,
    lambda: C64,
    forms: &FormMatrices,
    which: FormSide,
) -> Result<ConormalVector> {
    conormal_with_tolerance(
        f,
        h,
        lambda,
        forms,
        which,
        Tolerances::default().consistency,
    )
}

pub fn conormal_with_tolerance(
    f: &CVec,
    h: &CVec,
    lambda: C64,
    forms: &FormMatrices,
    which: FormSide,
    tol_consistency: f64,
) -> Result<ConormalVector> {
    let n = forms.num_dofs();
    check_len("conormal f", f, n)?;
    check_len("conormal h", h, n)?;
    let r = strong_residual(f, h, lambda, forms, which);
    let interior = linalg::gather(&r, &forms.interior).norm();
    let scale = forms.k_norm * f.norm() + forms.mass_norm * (lambda.norm() * f.norm() + h.norm());
    let tolerance = tol_consistency * scale;
    if interior > tolerance {
        return Err(Error::NotInOperatorDomain {
            residual: interior,
            tolerance,
        });
    }
    Ok(ConormalVector {
        values: linalg::gather(&r, &forms.boundary),
        convention: CoordinateConvention::Dual,
    })
}

/// `(K - λM) f - M h` on all rows.
pub(crate) fn strong_residual(
    f: &CVec,
    h: &CVec,
    lambda: C64,
    forms: &FormMatrices,
    which: FormSide,
) -> CVec {
    forms.stiffness(which) * f - (&forms.mass * f) * lambda - &forms.mass * h
}

/// `K_B = K - Trᵀ · B_dual · Tr`.
pub fn robin_matrix(forms: &FormMatrices, b: Option<&BoundaryOperator>) -> CMat {
    let mut kb = forms.k.clone();
    if let Some(b) = b {
        let bd = b.dual(forms);
        for (i, &ni) in forms.boundary.iter().enumerate() {
            for (j, &nj) in forms.boundary.iter().enumerate() {
                kb[(ni, nj)] -= bd[(i, j)];
            }
        }
    }
    kb
}

/// Relative padding added to the exact shift so that the certificate matrix
/// is positive definite rather than merely semidefinite.
const SHIFT_PAD: f64 = 1e-8;

/// Smallest `ν ≥ 0` (up to a relative padding of `1e-8`) such that
/// `Herm(K_B) + ν M - μ H¹` is positive semidefinite, where `K_B` carries the
/// Robin correction of `b` when given.
///
/// `mu_target` must not exceed the ellipticity constant of the principal
/// coefficients.
pub fn ellipticity_certificate(
    forms: &FormMatrices,
    b: Option<&BoundaryOperator>,
    mu_target: f64,
) -> Result<f64> {
    if mu_target.is_nan() || mu_target < 0.0 || mu_target > forms.mu {
        return Err(Error::InfeasibleCoercivity {
            target: mu_target,
            bound: forms.mu,
        });
    }
    let kb = robin_matrix(forms, b);
    let shifted = linalg::hermitian_part(&kb) - forms.h1.scale(mu_target);
    let ev = linalg::generalized_hermitian_eigenvalues(&shifted, &forms.mass)?;
    let lowest = *ev
        .first()
        .ok_or_else(|| Error::Numerical("empty certificate pencil".into()))?;
    let exact = -lowest;
    Ok((exact + SHIFT_PAD * exact.abs().max(1.0)).max(0.0))
}

/// `Herm(K_B) + ν M - μ H¹`; positive semidefinite when `ν` certifies `μ`.
pub fn certificate_matrix(
    forms: &FormMatrices,
    b: Option<&BoundaryOperator>,
    mu_target: f64,
    nu: f64,
) -> CMat {
    linalg::hermitian_part(&robin_matrix(forms, b)) + forms.mass.scale(nu)
        - forms.h1.scale(mu_target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_interval_mesh, build_rectangle_mesh};

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn laplace_1d(n: usize) -> FormMatrices {
        let d = build_interval_mesh(n, 1.0).unwrap();
        assemble_forms(&d, &CoefficientSet::laplacian(&d)).unwrap()
    }

    fn messy_2d() -> FormMatrices {
        let d = build_rectangle_mesh(3, 4, 1.0, 1.3).unwrap();
        let p = CMat::from_row_slice(
            2,
            2,
            &[c(2.0), C64::new(0.3, 0.2), C64::new(-0.1, 0.4), c(1.5)],
        );
        let b = CVec::from_vec(alloc::vec![C64::new(0.2, -0.3), C64::new(0.5, 0.1)]);
        let cv = CVec::from_vec(alloc::vec![C64::new(-0.4, 0.2), C64::new(0.1, 0.7)]);
        let coeffs = CoefficientSet::uniform(&d, p, b, cv, C64::new(0.3, 1.1)).unwrap();
        assemble_forms(&d, &coeffs).unwrap()
    }

    #[test]
    fn laplacian_two_segments() {
        let f = laplace_1d(2);
        let expected = [[2.0, -2.0, 0.0], [-2.0, 4.0, -2.0], [0.0, -2.0, 2.0]];
        for (i, row) in expected.iter().enumerate() {
            for (j, &e) in row.iter().enumerate() {
                assert!((f.k[(i, j)] - c(e)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn zero_principal_part_is_rejected() {
        let d = build_interval_mesh(2, 1.0).unwrap();
        let coeffs = CoefficientSet::anisotropic(&d, CMat::zeros(1, 1)).unwrap();
        assert!(matches!(
            assemble_forms(&d, &coeffs),
            Err(Error::Ellipticity { .. })
        ));
    }

    #[test]
    fn coefficient_count_mismatch() {
        let d = build_interval_mesh(3, 1.0).unwrap();
        let other = build_interval_mesh(4, 1.0).unwrap();
        let coeffs = CoefficientSet::laplacian(&other);
        assert!(matches!(
            assemble_forms(&d, &coeffs),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn dual_matrix_is_adjoint() {
        let f = messy_2d();
        let diff = (&f.k_dual - f.k.adjoint()).norm() / f.k.norm();
        assert!(diff < 1e-14, "{diff}");
        let d = build_interval_mesh(5, 1.0).unwrap();
        let f = assemble_forms(&d, &CoefficientSet::schroedinger(&d, C64::new(0.0, 1.0))).unwrap();
        assert!((&f.k_dual - f.k.adjoint()).norm() < 1e-14);
    }

    #[test]
    fn gram_matrices_are_positive_definite() {
        let f = messy_2d();
        for m in [&f.mass, &f.mass_boundary, &f.h1] {
            assert!((m - m.adjoint()).norm() < 1e-15);
            assert!(linalg::hermitian_eigenvalues(m)[0] > 0.0);
        }
        // boundary mass integrates constants to the perimeter
        let ones = CVec::from_element(f.num_boundary(), c(1.0));
        assert!((ones.dotc(&(&f.mass_boundary * &ones)) - c(2.0 * 2.3)).norm() < 1e-13);
        let t = f.trace_selector();
        for r in 0..t.nrows() {
            assert_eq!(t.row(r).iter().filter(|z| z.re == 1.0).count(), 1);
        }
    }

    #[test]
    fn trace_examples() {
        let f = laplace_1d(2);
        let ones = CVec::from_element(3, c(1.0));
        assert_eq!(trace(&ones, &f).unwrap(), CVec::from_element(2, c(1.0)));
        let x = CVec::from_vec(alloc::vec![c(0.0), c(0.5), c(1.0)]);
        assert_eq!(
            trace(&x, &f).unwrap(),
            CVec::from_vec(alloc::vec![c(0.0), c(1.0)])
        );
        let bump = CVec::from_vec(alloc::vec![c(0.0), c(3.0), c(0.0)]);
        assert_eq!(trace(&bump, &f).unwrap().norm(), 0.0);
        assert!(trace(&CVec::zeros(4), &f).is_err());
    }

    #[test]
    fn conormal_of_linear_function() {
        let f = laplace_1d(2);
        let x = CVec::from_vec(alloc::vec![c(0.0), c(0.5), c(1.0)]);
        let g = conormal(&x, &CVec::zeros(3), c(0.0), &f, FormSide::Primal).unwrap();
        assert_eq!(g.convention, CoordinateConvention::Dual);
        assert!((g.values[0] - c(-1.0)).norm() < 1e-14);
        assert!((g.values[1] - c(1.0)).norm() < 1e-14);
    }

    #[test]
    fn conormal_rejects_inconsistent_data() {
        let f = laplace_1d(4);
        let bump = CVec::from_vec(alloc::vec![c(0.0), c(0.0), c(1.0), c(0.0), c(0.0)]);
        let err = conormal(&bump, &CVec::zeros(5), c(0.0), &f, FormSide::Primal).unwrap_err();
        assert!(matches!(err, Error::NotInOperatorDomain { .. }));
    }

    #[test]
    fn conormal_vanishes_for_balanced_data() {
        let f = laplace_1d(4);
        let bump = CVec::from_vec(alloc::vec![c(0.0), c(0.0), c(1.0), c(0.0), c(0.0)]);
        let lambda = C64::new(2.0, 0.5);
        let rhs = &f.k * &bump - (&f.mass * &bump) * lambda;
        let h = f.mass.clone().lu().solve(&rhs).unwrap();
        let g = conormal(&bump, &h, lambda, &f, FormSide::Primal).unwrap();
        assert!(g.values.norm() < 1e-12);
    }

    #[test]
    fn green_first_identity_and_linearity() {
        let f = messy_2d();
        let n = f.num_dofs();
        let lambda = C64::new(-0.7, 0.3);
        // interior-consistent pair: pick f arbitrary, then h = M⁻¹ (K - λM) f
        let v = CVec::from_fn(n, |i, _| {
            C64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos())
        });
        let h = f
            .mass
            .clone()
            .lu()
            .solve(&(&f.k * &v - (&f.mass * &v) * lambda))
            .unwrap();
        let gam = conormal(&v, &h, lambda, &f, FormSide::Primal).unwrap();
        let g = CVec::from_fn(n, |i, _| {
            C64::new((i as f64 * 0.21).cos(), -(i as f64 * 0.05).sin())
        });
        let lhs = g.dotc(&(&f.k * &v)) - f.l2_inner(&(v.scale(1.0) * lambda + &h), &g);
        let rhs = gam.pair(&f, &trace(&g, &f).unwrap());
        assert!((lhs - rhs).norm() < 1e-12 * lhs.norm().max(1.0));
        let gam2 = conormal(
            &(v.clone() * c(2.0)),
            &(h.clone() * c(2.0)),
            lambda,
            &f,
            FormSide::Primal,
        )
        .unwrap();
        assert!((gam2.values - gam.values.clone() * c(2.0)).norm() < 1e-12);
        let nodal = gam.to_nodal(&f);
        assert!((nodal.to_dual(&f).values - &gam.values).norm() < 1e-12 * gam.values.norm());
    }

    #[test]
    fn certificate_half_coercivity() {
        let f = laplace_1d(20);
        let nu = ellipticity_certificate(&f, None, 0.5).unwrap();
        assert!(nu >= 0.0);
        let cert = certificate_matrix(&f, None, 0.5, nu);
        assert!(linalg::hermitian_eigenvalues(&cert)[0] > -1e-12);
    }

    #[test]
    fn certificate_at_zero_target_matches_direct_eigensolve() {
        let d = build_interval_mesh(10, 1.0).unwrap();
        let f = assemble_forms(&d, &CoefficientSet::schroedinger(&d, C64::new(-3.0, 2.0))).unwrap();
        let nu = ellipticity_certificate(&f, None, 0.0).unwrap();
        let direct = linalg::generalized_hermitian_eigenvalues(&f.k, &f.mass).unwrap()[0];
        assert!((nu - (-direct).max(0.0)).abs() < 1e-7, "{nu} vs {direct}");
    }

    #[test]
    fn certificate_rejects_excessive_target() {
        let f = laplace_1d(10);
        assert!(matches!(
            ellipticity_certificate(&f, None, 10.0 * f.mu),
            Err(Error::InfeasibleCoercivity { .. })
        ));
    }

    #[test]
    fn certificate_is_monotone() {
        let f = messy_2d();
        let mut last = 0.0;
        for k in 0..6 {
            let nu = ellipticity_certificate(&f, None, f.mu * k as f64 / 5.0).unwrap();
            assert!(nu >= last);
            last = nu;
        }
    }
}
