//! Dirichlet and Robin realizations as matrix pencils, and the boundary value
//! problems solved in the resolvent set of the Dirichlet realization.
//!
//! The discrete Dirichlet realization `A_D` is the pencil `(K_II, M_II)` on
//! the interior nodes; the Robin realization `A_B` is the pencil `(K_B, M)` on
//! all nodes with `K_B = K - Trᵀ B_dual Tr`.

use alloc::vec::Vec;

use nalgebra::{Dyn, LU};

use crate::assembly::{self, FormMatrices, FormSide};
use crate::linalg::{self, gather, select};
use crate::{CMat, CVec, Error, Result, Tolerances, C64};

/// Interior blocks of `K`, `K*` and `M` with the Dirichlet spectrum.
#[derive(Debug, Clone)]
pub struct DirichletPencil {
    pub k_ii: CMat,
    pub k_dual_ii: CMat,
    pub mass_ii: CMat,
    /// Generalized eigenvalues of `(K_II, M_II)`, sorted.
    pub spectrum: Vec<C64>,
    /// Generalized eigenvalues of `(K*_II, M_II)`, sorted.
    pub spectrum_dual: Vec<C64>,
    /// `‖K_II‖₂`.
    pub k_norm: f64,
    /// Relative resolvent margin below which `λ` is treated as spectral.
    pub tol_resolvent: f64,
}

/// Result of a resolvent-set test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolventCheck {
    pub in_resolvent: bool,
    /// `σ_min(K_II - λ M_II) / ‖K_II‖₂`.
    pub margin: f64,
}

pub fn dirichlet_pencil(forms: &FormMatrices) -> Result<DirichletPencil> {
    dirichlet_pencil_with_tolerance(forms, Tolerances::default().resolvent)
}

pub fn dirichlet_pencil_with_tolerance(
    forms: &FormMatrices,
    tol_resolvent: f64,
) -> Result<DirichletPencil> {
    let i = &forms.interior;
    let k_ii = select(&forms.k, i, i);
    let k_dual_ii = select(&forms.k_dual, i, i);
    let mass_ii = select(&forms.mass, i, i);
    let spectrum = linalg::generalized_eigenvalues(&k_ii, &mass_ii)?;
    let spectrum_dual = linalg::generalized_eigenvalues(&k_dual_ii, &mass_ii)?;
    let k_norm = linalg::norm2(&k_ii);
    Ok(DirichletPencil {
        k_ii,
        k_dual_ii,
        mass_ii,
        spectrum,
        spectrum_dual,
        k_norm,
        tol_resolvent,
    })
}

impl DirichletPencil {
    /// Distance from `lambda` to the computed Dirichlet spectrum.
    pub fn distance_to_spectrum(&self, lambda: C64) -> f64 {
        linalg::distance_to(&self.spectrum, lambda)
    }

    fn interior_matrix(&self, side: FormSide, lambda: C64) -> CMat {
        let k = match side {
            FormSide::Primal => &self.k_ii,
            FormSide::Dual => &self.k_dual_ii,
        };
        k - self.mass_ii.map(|m| m * lambda)
    }

    /// Factorizes `K_II - λ M_II` (or its dual counterpart) after checking the
    /// resolvent margin.
    ///
    /// For [`FormSide::Dual`], `lambda` is the spectral parameter of the
    /// adjoint problem, so the check is against `conj(lambda)` in the primal
    /// spectrum.
    pub fn factor(&self, side: FormSide, lambda: C64) -> Result<ShiftedInterior> {
        let a = self.interior_matrix(side, lambda);
        let margin = if a.is_empty() {
            f64::INFINITY
        } else {
            linalg::min_singular_value(&a) / self.k_norm.max(f64::MIN_POSITIVE)
        };
        if margin.is_nan() || margin <= self.tol_resolvent {
            return Err(Error::ResolventViolation {
                lambda,
                margin,
                tolerance: self.tol_resolvent,
            });
        }
        Ok(ShiftedInterior {
            side,
            lambda,
            margin,
            lu: a.lu(),
        })
    }
}

/// LU factorization of the shifted interior block at one spectral parameter.
#[derive(Debug, Clone)]
pub struct ShiftedInterior {
    pub side: FormSide,
    pub lambda: C64,
    pub margin: f64,
    lu: LU<C64, Dyn, Dyn>,
}

impl ShiftedInterior {
    pub fn solve(&self, rhs: &CVec) -> CVec {
        if rhs.is_empty() {
            return rhs.clone();
        }
        self.lu
            .solve(rhs)
            .expect("factor checked the resolvent margin")
    }

    pub fn solve_matrix(&self, rhs: &CMat) -> CMat {
        if rhs.is_empty() {
            return rhs.clone();
        }
        self.lu
            .solve(rhs)
            .expect("factor checked the resolvent margin")
    }

    /// Solution of the homogeneous problem `(A - λ) f = 0`, `Tr f = φ`.
    pub fn homogeneous(&self, forms: &FormMatrices, phi: &CVec) -> Result<CVec> {
        check_boundary_len(forms, phi)?;
        let k = forms.stiffness(self.side);
        let a_ib = select(k, &forms.interior, &forms.boundary)
            - select(&forms.mass, &forms.interior, &forms.boundary).map(|m| m * self.lambda);
        let f_i = -self.solve(&(a_ib * phi));
        let mut f = forms.extend_boundary(phi);
        for (row, &node) in forms.interior.iter().enumerate() {
            f[node] = f_i[row];
        }
        Ok(f)
    }

    /// Discrete `(A_D - λ)⁻¹ h`, an interior-supported vector.
    pub fn dirichlet_resolvent(&self, forms: &FormMatrices, h: &CVec) -> Result<CVec> {
        if h.len() != forms.num_dofs() {
            return Err(Error::Dimension {
                what: "resolvent right-hand side",
                expected: forms.num_dofs(),
                found: h.len(),
            });
        }
        let mh = gather(&(&forms.mass * h), &forms.interior);
        let u_i = self.solve(&mh);
        let mut u = CVec::zeros(forms.num_dofs());
        for (row, &node) in forms.interior.iter().enumerate() {
            u[node] = u_i[row];
        }
        Ok(u)
    }

    /// Solution of `(A - λ) f = h`, `Tr f = φ`, assembled as the homogeneous
    /// solution plus `(A_D - λ)⁻¹ h`.
    pub fn inhomogeneous(&self, forms: &FormMatrices, phi: &CVec, h: &CVec) -> Result<CVec> {
        Ok(self.homogeneous(forms, phi)? + self.dirichlet_resolvent(forms, h)?)
    }
}

fn check_boundary_len(forms: &FormMatrices, phi: &CVec) -> Result<()> {
    if phi.len() != forms.num_boundary() {
        return Err(Error::Dimension {
            what: "boundary data",
            expected: forms.num_boundary(),
            found: phi.len(),
        });
    }
    Ok(())
}

pub fn in_resolvent_set(pencil: &DirichletPencil, lambda: C64) -> ResolventCheck {
    match pencil.factor(FormSide::Primal, lambda) {
        Ok(s) => ResolventCheck {
            in_resolvent: true,
            margin: s.margin,
        },
        Err(Error::ResolventViolation { margin, .. }) => ResolventCheck {
            in_resolvent: false,
            margin,
        },
        Err(_) => ResolventCheck {
            in_resolvent: false,
            margin: f64::NAN,
        },
    }
}

pub fn solve_homogeneous_bvp(
    forms: &FormMatrices,
    pencil: &DirichletPencil,
    lambda: C64,
    phi: &CVec,
) -> Result<CVec> {
    pencil
        .factor(FormSide::Primal, lambda)?
        .homogeneous(forms, phi)
}

/// Homogeneous problem for the formal adjoint, `(Ã - μ) g = 0`, `Tr g = φ`.
pub fn solve_adjoint_homogeneous_bvp(
    forms: &FormMatrices,
    pencil: &DirichletPencil,
    mu: C64,
    phi: &CVec,
) -> Result<CVec> {
    pencil.factor(FormSide::Dual, mu)?.homogeneous(forms, phi)
}

pub fn solve_inhomogeneous_bvp(
    forms: &FormMatrices,
    pencil: &DirichletPencil,
    lambda: C64,
    phi: &CVec,
    h: &CVec,
) -> Result<CVec> {
    pencil
        .factor(FormSide::Primal, lambda)?
        .inhomogeneous(forms, phi, h)
}

pub fn dirichlet_resolvent(
    forms: &FormMatrices,
    pencil: &DirichletPencil,
    lambda: C64,
    h: &CVec,
) -> Result<CVec> {
    pencil
        .factor(FormSide::Primal, lambda)?
        .dirichlet_resolvent(forms, h)
}

/// A bounded boundary operator `B`, stored in nodal (`L₂(Γ)`) coordinates,
/// with its semiboundedness constant.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryOperator {
    pub b_nodal: CMat,
    /// Smallest `η` with `Re(φᴴ M_Γ B φ) ≤ η φᴴ M_Γ φ`.
    pub eta: f64,
}

impl BoundaryOperator {
    pub fn from_nodal(forms: &FormMatrices, b_nodal: CMat) -> Result<Self> {
        let n = forms.num_boundary();
        if b_nodal.shape() != (n, n) {
            return Err(Error::Dimension {
                what: "boundary operator",
                expected: n,
                found: b_nodal.nrows(),
            });
        }
        let weighted = &forms.mass_boundary * &b_nodal;
        let eta = *linalg::generalized_hermitian_eigenvalues(&weighted, &forms.mass_boundary)?
            .last()
            .unwrap_or(&0.0);
        Ok(Self { b_nodal, eta })
    }

    /// `B` given by its pairings `⟨B φ_j, φ_i⟩` (dual coordinates).
    pub fn from_dual(forms: &FormMatrices, b_dual: CMat) -> Result<Self> {
        let n = forms.num_boundary();
        if b_dual.shape() != (n, n) {
            return Err(Error::Dimension {
                what: "boundary operator",
                expected: n,
                found: b_dual.nrows(),
            });
        }
        Self::from_nodal(forms, forms.boundary_dual_to_nodal(&b_dual))
    }

    pub fn zero(forms: &FormMatrices) -> Self {
        let n = forms.num_boundary();
        Self {
            b_nodal: CMat::zeros(n, n),
            eta: 0.0,
        }
    }

    /// `Mass_boundary · B_nodal`.
    pub fn dual(&self, forms: &FormMatrices) -> CMat {
        &forms.mass_boundary * &self.b_nodal
    }

    pub fn dimension(&self) -> usize {
        self.b_nodal.nrows()
    }
}

/// The Robin pencil `(K_B, M)` and its spectrum.
#[derive(Debug, Clone)]
pub struct RobinPencil {
    pub k_b: CMat,
    pub mass: CMat,
    pub spectrum: Vec<C64>,
}

impl RobinPencil {
    /// `(K_B - λ M) f - M h`.
    pub fn link_residual(&self, lambda: C64, f: &CVec, h: &CVec) -> CVec {
        &self.k_b * f - (&self.mass * f) * lambda - &self.mass * h
    }

    /// Eigenvalue of the pencil closest to `target`.
    pub fn nearest_eigenvalue(&self, target: C64) -> Option<C64> {
        self.spectrum
            .iter()
            .copied()
            .min_by(|a, b| (a - target).norm().total_cmp(&(b - target).norm()))
    }
}

pub fn robin_pencil(forms: &FormMatrices, b: &BoundaryOperator) -> Result<RobinPencil> {
    if b.dimension() != forms.num_boundary() {
        return Err(Error::Dimension {
            what: "boundary operator",
            expected: forms.num_boundary(),
            found: b.dimension(),
        });
    }
    let k_b = assembly::robin_matrix(forms, Some(b));
    let spectrum = linalg::generalized_eigenvalues(&k_b, &forms.mass)?;
    Ok(RobinPencil {
        k_b,
        mass: forms.mass.clone(),
        spectrum,
    })
}

/// Relative mismatch `‖γ_N f - B Tr f‖` in nodal coordinates for a pair with
/// strong action `A f = λ f + h`; zero exactly when `f ∈ dom A_B`.
pub fn robin_domain_residual(
    forms: &FormMatrices,
    b: &BoundaryOperator,
    f: &CVec,
    h: &CVec,
    lambda: C64,
) -> Result<f64> {
    let gamma = assembly::conormal(f, h, lambda, forms, FormSide::Primal)?.to_nodal(forms);
    let bphi = &b.b_nodal * assembly::trace(f, forms)?;
    let minv =
        forms.boundary_dual_to_nodal(&CMat::identity(forms.num_boundary(), forms.num_boundary()));
    let scale = linalg::norm2(&minv)
        * ((forms.k_norm() + lambda.norm() * forms.mass_norm()) * f.norm()
            + forms.mass_norm() * h.norm())
        + bphi.norm();
    let diff = (gamma.values - bphi).norm();
    Ok(if scale > 0.0 { diff / scale } else { diff })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_forms, CoefficientSet};
    use crate::mesh::{build_interval_mesh, build_rectangle_mesh};
    use core::f64::consts::PI;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn laplace_1d(n: usize) -> FormMatrices {
        let d = build_interval_mesh(n, 1.0).unwrap();
        assemble_forms(&d, &CoefficientSet::laplacian(&d)).unwrap()
    }

    #[test]
    fn dirichlet_ground_state_converges() {
        let f = laplace_1d(100);
        let p = dirichlet_pencil(&f).unwrap();
        let l0 = p.spectrum[0];
        assert!(l0.im.abs() < 1e-8);
        assert!((l0.re - PI * PI).abs() / (PI * PI) < 1e-3);
    }

    #[test]
    fn single_interior_dof() {
        let f = laplace_1d(2);
        let p = dirichlet_pencil(&f).unwrap();
        assert_eq!(p.spectrum.len(), 1);
        let expected = f.k[(1, 1)] / f.mass[(1, 1)];
        assert!((p.spectrum[0] - expected).norm() < 1e-13);
    }

    #[test]
    fn imaginary_potential_shifts_spectrum() {
        let d = build_interval_mesh(12, 1.0).unwrap();
        let f0 = assemble_forms(&d, &CoefficientSet::laplacian(&d)).unwrap();
        let fi = assemble_forms(&d, &CoefficientSet::schroedinger(&d, C64::new(0.0, 1.0))).unwrap();
        let p0 = dirichlet_pencil(&f0).unwrap();
        let pi = dirichlet_pencil(&fi).unwrap();
        for (a, b) in p0.spectrum.iter().zip(&pi.spectrum) {
            assert!((b - a - C64::new(0.0, 1.0)).norm() < 1e-9 * a.norm().max(1.0));
        }
    }

    #[test]
    fn dual_spectrum_is_conjugate() {
        let d = build_rectangle_mesh(4, 3, 1.0, 1.0).unwrap();
        let p2 = CMat::from_row_slice(
            2,
            2,
            &[c(1.0), C64::new(0.2, 0.3), C64::new(0.0, -0.1), c(1.2)],
        );
        let coeffs = CoefficientSet::uniform(
            &d,
            p2,
            CVec::from_vec(alloc::vec![C64::new(0.5, 0.0), c(-0.3)]),
            CVec::from_vec(alloc::vec![c(0.1), C64::new(0.0, 0.4)]),
            C64::new(0.2, 0.7),
        )
        .unwrap();
        let f = assemble_forms(&d, &coeffs).unwrap();
        let p = dirichlet_pencil(&f).unwrap();
        let mut conj: Vec<C64> = p.spectrum.iter().map(|z| z.conj()).collect();
        linalg::sort_complex(&mut conj);
        for (a, b) in conj.iter().zip(&p.spectrum_dual) {
            assert!((a - b).norm() < 1e-9 * a.norm().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn resolvent_set_membership() {
        let f = laplace_1d(20);
        let p = dirichlet_pencil(&f).unwrap();
        assert!(in_resolvent_set(&p, c(-1.0)).in_resolvent);
        let ev = p.spectrum[0];
        assert!(!in_resolvent_set(&p, ev).in_resolvent);
        let near = in_resolvent_set(&p, ev + c(1e-12));
        assert!(!near.in_resolvent, "margin {}", near.margin);
    }

    #[test]
    fn homogeneous_reproduces_linears() {
        let f = laplace_1d(8);
        let p = dirichlet_pencil(&f).unwrap();
        let u = solve_homogeneous_bvp(&f, &p, c(0.0), &CVec::from_vec(alloc::vec![c(0.0), c(1.0)]))
            .unwrap();
        for i in 0..=8 {
            assert!((u[i] - c(i as f64 / 8.0)).norm() < 1e-14);
        }
        let z = solve_homogeneous_bvp(&f, &p, c(0.0), &CVec::zeros(2)).unwrap();
        assert_eq!(z.norm(), 0.0);
    }

    #[test]
    fn homogeneous_matches_sinh_profile() {
        for (n, bound) in [(20, 5e-4), (40, 1.3e-4)] {
            let f = laplace_1d(n);
            let p = dirichlet_pencil(&f).unwrap();
            let u = solve_homogeneous_bvp(
                &f,
                &p,
                c(-1.0),
                &CVec::from_vec(alloc::vec![c(1.0), c(0.0)]),
            )
            .unwrap();
            let err = (0..=n)
                .map(|i| {
                    let x = i as f64 / n as f64;
                    (u[i] - c((1.0 - x).sinh() / 1f64.sinh())).norm()
                })
                .fold(0.0, f64::max);
            assert!(err < bound, "n={n}: {err}");
        }
    }

    #[test]
    fn homogeneous_rejects_dirichlet_eigenvalue() {
        let f = laplace_1d(6);
        let p = dirichlet_pencil(&f).unwrap();
        let err = solve_homogeneous_bvp(&f, &p, p.spectrum[1], &CVec::zeros(2)).unwrap_err();
        assert!(matches!(err, Error::ResolventViolation { .. }));
    }

    #[test]
    fn inhomogeneous_superposition() {
        let d = build_rectangle_mesh(3, 3, 1.0, 1.0).unwrap();
        let f = assemble_forms(&d, &CoefficientSet::schroedinger(&d, C64::new(0.5, 0.5))).unwrap();
        let p = dirichlet_pencil(&f).unwrap();
        let lambda = C64::new(1.0, -0.5);
        let phi = CVec::from_fn(f.num_boundary(), |i, _| C64::new(i as f64, 1.0));
        let h = CVec::from_fn(f.num_dofs(), |i, _| C64::new(1.0, -(i as f64)));
        let full = solve_inhomogeneous_bvp(&f, &p, lambda, &phi, &h).unwrap();
        let hom =
            solve_inhomogeneous_bvp(&f, &p, lambda, &phi, &CVec::zeros(f.num_dofs())).unwrap();
        assert!((&hom - solve_homogeneous_bvp(&f, &p, lambda, &phi).unwrap()).norm() < 1e-14);
        let part =
            solve_inhomogeneous_bvp(&f, &p, lambda, &CVec::zeros(f.num_boundary()), &h).unwrap();
        assert!((&full - (&hom + &part)).norm() < 1e-12 * full.norm());
        assert!(assembly::trace(&part, &f).unwrap().norm() == 0.0);
        // interior rows of (K - λM) f = M h
        let r = assembly::strong_residual(&full, &h, lambda, &f, FormSide::Primal);
        assert!(gather(&r, &f.interior).norm() < 1e-12 * full.norm());
    }

    #[test]
    fn conormal_of_dirichlet_eigenvector() {
        let f = laplace_1d(10);
        let p = dirichlet_pencil(&f).unwrap();
        let lambda_d = p.spectrum[0];
        let a = &p.k_ii - p.mass_ii.map(|m| m * lambda_d);
        let v_i = linalg::SvdSplit::new(&a, Some(1e-9))
            .nullspace()
            .column(0)
            .into_owned();
        let mut v = CVec::zeros(f.num_dofs());
        for (row, &node) in f.interior.iter().enumerate() {
            v[node] = v_i[row];
        }
        let lambda = c(0.3);
        let h = v.clone() * (lambda_d - lambda);
        let g = assembly::conormal(&v, &h, lambda, &f, FormSide::Primal).unwrap();
        let expected = gather(&(&f.k * &v - (&f.mass * &v) * lambda_d), &f.boundary);
        assert!((g.values - expected).norm() < 1e-12);
    }

    #[test]
    fn neumann_realization_has_zero_eigenvalue() {
        let f = laplace_1d(30);
        let r = robin_pencil(&f, &BoundaryOperator::zero(&f)).unwrap();
        let l0 = r.nearest_eigenvalue(c(0.0)).unwrap();
        assert!(l0.norm() < 1e-9);
        assert!((r.spectrum[1].re - PI * PI).abs() < 0.05);
    }

    #[test]
    fn dissipative_real_boundary_operator_gives_real_spectrum() {
        let d = build_rectangle_mesh(3, 3, 1.0, 1.0).unwrap();
        let f = assemble_forms(&d, &CoefficientSet::laplacian(&d)).unwrap();
        let n = f.num_boundary();
        let b = CMat::identity(n, n) * c(-2.0);
        let b = BoundaryOperator::from_nodal(&f, b).unwrap();
        assert!(b.eta <= -2.0 + 1e-12);
        let r = robin_pencil(&f, &b).unwrap();
        assert!(r
            .spectrum
            .iter()
            .all(|z| z.im.abs() < 1e-8 * z.norm().max(1.0)));
    }

    #[test]
    fn robin_correction_is_additive() {
        let d = build_rectangle_mesh(2, 3, 1.0, 1.0).unwrap();
        let f = assemble_forms(&d, &CoefficientSet::laplacian(&d)).unwrap();
        let n = f.num_boundary();
        let b1 = CMat::from_fn(n, n, |i, j| C64::new((i + j) as f64, i as f64 - j as f64));
        let b2 = CMat::from_fn(n, n, |i, j| {
            C64::new(1.0 / (1.0 + i as f64 + 2.0 * j as f64), 0.5)
        });
        let bo1 = BoundaryOperator::from_nodal(&f, b1.clone()).unwrap();
        let bo2 = BoundaryOperator::from_nodal(&f, b2.clone()).unwrap();
        let bo12 = BoundaryOperator::from_nodal(&f, b1 + b2).unwrap();
        let k12 = assembly::robin_matrix(&f, Some(&bo12));
        let k1 = assembly::robin_matrix(&f, Some(&bo1));
        let corr2 = &f.k - assembly::robin_matrix(&f, Some(&bo2));
        assert!((k12 - (k1 - corr2)).norm() < 1e-12);
        // only boundary rows/columns differ
        let kb = assembly::robin_matrix(&f, Some(&bo1));
        for &i in &f.interior {
            for j in 0..f.num_dofs() {
                assert_eq!(kb[(i, j)], f.k[(i, j)]);
                assert_eq!(kb[(j, i)], f.k[(j, i)]);
            }
        }
    }

    #[test]
    fn boundary_operator_dimension_mismatch() {
        let f = laplace_1d(4);
        assert!(BoundaryOperator::from_nodal(&f, CMat::zeros(3, 3)).is_err());
    }

    #[test]
    fn robin_eigenvectors_satisfy_boundary_condition() {
        let d = build_interval_mesh(16, 1.0).unwrap();
        let f = assemble_forms(&d, &CoefficientSet::schroedinger(&d, C64::new(0.0, 0.5))).unwrap();
        let b = BoundaryOperator::from_nodal(
            &f,
            CMat::from_row_slice(
                2,
                2,
                &[C64::new(0.3, 0.1), c(1.0), c(-0.5), C64::new(0.0, 2.0)],
            ),
        )
        .unwrap();
        let r = robin_pencil(&f, &b).unwrap();
        for &lambda in r.spectrum.iter().take(4) {
            let a = &r.k_b - r.mass.map(|m| m * lambda);
            let v = linalg::SvdSplit::new(&a, Some(1e-9)).nullspace();
            assert_eq!(v.ncols(), 1);
            let v = v.column(0).into_owned();
            let res =
                robin_domain_residual(&f, &b, &v, &CVec::zeros(f.num_dofs()), lambda).unwrap();
            assert!(res < 1e-10, "{res}");
        }
    }
}
