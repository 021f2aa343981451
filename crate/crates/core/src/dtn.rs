//! The Dirichlet-to-Neumann map as a boundary Schur complement.
//!
//! With `A(λ) = K - λM` split into interior (`I`) and boundary (`Γ`) blocks,
//!
//! ```text
//! D(λ) = A_ΓΓ - A_ΓI A_II⁻¹ A_IΓ
//! ```
//!
//! in dual boundary coordinates: column `j` of `D(λ)` holds the pairings of
//! the co-normal derivative of the `λ`-harmonic extension of `e_j` against
//! the boundary nodal functions.

use alloc::vec::Vec;

use crate::assembly::{FormMatrices, FormSide};
use crate::linalg::{self, select};
use crate::realizations::{DirichletPencil, ShiftedInterior};
use crate::{CMat, Error, Result, C64};

/// Highest derivative order produced by the Taylor recurrence.
pub const ORDER_CAP: usize = 8;
/// Number of trapezoid nodes used by default on the contour.
pub const DEFAULT_CONTOUR_NODES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeMethod {
    Taylor,
    Contour,
}

/// `D(λ₀), D'(λ₀), …, D^(order)(λ₀)` in dual coordinates.
#[derive(Debug, Clone)]
pub struct DtnDerivatives {
    pub lambda0: C64,
    pub order: usize,
    pub matrices: Vec<CMat>,
    pub method: DerivativeMethod,
}

impl DtnDerivatives {
    /// Taylor coefficients `D^(l)(λ₀) / l!`.
    pub fn coefficients(&self) -> Vec<CMat> {
        let mut fact = 1.0;
        self.matrices
            .iter()
            .enumerate()
            .map(|(l, d)| {
                if l > 0 {
                    fact *= l as f64;
                }
                d.unscale(fact)
            })
            .collect()
    }

    /// Truncated Taylor polynomial evaluated at `lambda`.
    pub fn taylor_eval(&self, lambda: C64) -> CMat {
        let delta = lambda - self.lambda0;
        let coeffs = self.coefficients();
        let mut acc = CMat::zeros(coeffs[0].nrows(), coeffs[0].ncols());
        for c in coeffs.iter().rev() {
            acc = acc * delta + c;
        }
        acc
    }
}

struct Blocks {
    a_ig: CMat,
    a_gi: CMat,
    a_gg: CMat,
    m_ii: CMat,
    m_ig: CMat,
    m_gi: CMat,
    m_gg: CMat,
}

fn blocks(forms: &FormMatrices, side: FormSide, lambda: C64) -> Blocks {
    let (i, g) = (&forms.interior, &forms.boundary);
    let a = forms.stiffness(side) - forms.mass.map(|m| m * lambda);
    Blocks {
        a_ig: select(&a, i, g),
        a_gi: select(&a, g, i),
        a_gg: select(&a, g, g),
        m_ii: select(&forms.mass, i, i),
        m_ig: select(&forms.mass, i, g),
        m_gi: select(&forms.mass, g, i),
        m_gg: select(&forms.mass, g, g),
    }
}

fn schur(forms: &FormMatrices, shifted: &ShiftedInterior) -> CMat {
    let b = blocks(forms, shifted.side, shifted.lambda);
    &b.a_gg - &b.a_gi * shifted.solve_matrix(&b.a_ig)
}

/// `D(λ)` in dual coordinates.
pub fn dtn_eval(forms: &FormMatrices, pencil: &DirichletPencil, lambda: C64) -> Result<CMat> {
    let shifted = pencil.factor(FormSide::Primal, lambda)?;
    Ok(schur(forms, &shifted))
}

/// `D̃(λ)`, the Schur complement of `K* - λM`.
pub fn adjoint_dtn_eval(
    forms: &FormMatrices,
    pencil: &DirichletPencil,
    lambda: C64,
) -> Result<CMat> {
    let shifted = pencil.factor(FormSide::Dual, lambda)?;
    Ok(schur(forms, &shifted))
}

/// `Mass_boundary⁻¹ D(λ)`, the `L₂(Γ)` representation of the DtN map.
pub fn dtn_nodal(forms: &FormMatrices, pencil: &DirichletPencil, lambda: C64) -> Result<CMat> {
    Ok(forms.boundary_dual_to_nodal(&dtn_eval(forms, pencil, lambda)?))
}

/// Derivatives from the Neumann series of the interior resolvent around `λ₀`.
///
/// With `R₀ = (A_II(λ₀))⁻¹`, `A(λ) = A(λ₀) - δM` and `δ = λ - λ₀`,
/// `A_II(λ)⁻¹ A_IΓ(λ) = Σ δᵏ G_k` where
/// `G_k = (R₀M_II)ᵏ R₀ A_IΓ(λ₀) - (R₀M_II)ᵏ⁻¹ R₀ M_IΓ`. The Schur complement
/// is then a Cauchy product of degree-one factors with this series.
pub fn dtn_derivatives_taylor(
    forms: &FormMatrices,
    pencil: &DirichletPencil,
    lambda0: C64,
    order: usize,
) -> Result<DtnDerivatives> {
    if order > ORDER_CAP {
        return Err(Error::Order {
            requested: order,
            limit: ORDER_CAP,
        });
    }
    let shifted = pencil.factor(FormSide::Primal, lambda0)?;
    let b = blocks(forms, FormSide::Primal, lambda0);

    // p = (R₀M)ᵏ R₀ A_IΓ, q = (R₀M)ᵏ R₀ M_IΓ
    let mut p = shifted.solve_matrix(&b.a_ig);
    let mut q = shifted.solve_matrix(&b.m_ig);
    let mut g_prev = p.clone();
    let mut matrices = Vec::with_capacity(order + 1);
    matrices.push(&b.a_gg - &b.a_gi * &g_prev);

    let mut fact = 1.0;
    for l in 1..=order {
        fact *= l as f64;
        p = shifted.solve_matrix(&(&b.m_ii * &p));
        let g = &p - &q;
        let mut c = &b.m_gi * &g_prev - &b.a_gi * &g;
        if l == 1 {
            c -= &b.m_gg;
        }
        matrices.push(c.scale(fact));
        q = shifted.solve_matrix(&(&b.m_ii * &q));
        g_prev = g;
    }

    Ok(DtnDerivatives {
        lambda0,
        order,
        matrices,
        method: DerivativeMethod::Taylor,
    })
}

/// Half the distance from `λ₀` to the Dirichlet spectrum.
pub fn default_contour_radius(pencil: &DirichletPencil, lambda0: C64) -> f64 {
    0.5 * pencil.distance_to_spectrum(lambda0)
}

/// Derivatives by the trapezoid rule for the Cauchy integral on the circle
/// `|λ - λ₀| = radius` with `nodes` equispaced points.
pub fn dtn_derivatives_contour(
    forms: &FormMatrices,
    pencil: &DirichletPencil,
    lambda0: C64,
    order: usize,
    radius: f64,
    nodes: usize,
) -> Result<DtnDerivatives> {
    if order >= nodes {
        return Err(Error::Order {
            requested: order,
            limit: nodes.saturating_sub(1),
        });
    }
    let distance = pencil.distance_to_spectrum(lambda0);
    if radius.is_nan() || radius <= 0.0 || radius >= distance {
        return Err(Error::ContourViolation {
            center: lambda0,
            radius,
            distance,
        });
    }
    let ng = forms.num_boundary();
    let mut sums = alloc::vec![CMat::zeros(ng, ng); order + 1];
    for k in 0..nodes {
        let theta = 2.0 * core::f64::consts::PI * k as f64 / nodes as f64;
        let z = lambda0 + C64::from_polar(radius, theta);
        let shifted = pencil
            .factor(FormSide::Primal, z)
            .map_err(|_| Error::ContourViolation {
                center: lambda0,
                radius,
                distance,
            })?;
        let d = schur(forms, &shifted);
        for (l, s) in sums.iter_mut().enumerate() {
            *s += &d * C64::from_polar(1.0, -(l as f64) * theta);
        }
    }
    let mut fact = 1.0;
    let matrices = sums
        .into_iter()
        .enumerate()
        .map(|(l, s)| {
            if l > 0 {
                fact *= l as f64;
            }
            s.scale(fact / (nodes as f64 * libm::pow(radius, l as f64)))
        })
        .collect();
    Ok(DtnDerivatives {
        lambda0,
        order,
        matrices,
        method: DerivativeMethod::Contour,
    })
}

/// Relative spectral-norm distance between two matrices.
pub fn relative_difference(a: &CMat, b: &CMat) -> f64 {
    let scale = linalg::norm2(a).max(linalg::norm2(b));
    let d = linalg::norm2(&(a - b));
    if scale > 0.0 {
        d / scale
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{self, assemble_forms, CoefficientSet};
    use crate::mesh::{build_interval_mesh, build_rectangle_mesh};
    use crate::realizations::{dirichlet_pencil, solve_homogeneous_bvp};
    use crate::CVec;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn setup_1d(n: usize, c0: C64) -> (FormMatrices, DirichletPencil) {
        let d = build_interval_mesh(n, 1.0).unwrap();
        let f = assemble_forms(&d, &CoefficientSet::schroedinger(&d, c0)).unwrap();
        let p = dirichlet_pencil(&f).unwrap();
        (f, p)
    }

    fn setup_2d(n: usize) -> (FormMatrices, DirichletPencil) {
        let d = build_rectangle_mesh(n, n, 1.0, 1.0).unwrap();
        let pr = CMat::from_row_slice(
            2,
            2,
            &[c(1.0), C64::new(0.2, 0.1), C64::new(0.1, -0.3), c(1.4)],
        );
        let coeffs = CoefficientSet::uniform(
            &d,
            pr,
            CVec::from_vec(alloc::vec![C64::new(0.3, 0.1), c(-0.2)]),
            CVec::from_vec(alloc::vec![c(0.1), C64::new(0.0, 0.5)]),
            C64::new(0.5, 2.0),
        )
        .unwrap();
        let f = assemble_forms(&d, &coeffs).unwrap();
        let p = dirichlet_pencil(&f).unwrap();
        (f, p)
    }

    #[test]
    fn laplacian_at_zero_is_exact() {
        for n in [3, 10, 57] {
            let (f, p) = setup_1d(n, c(0.0));
            let d = dtn_eval(&f, &p, c(0.0)).unwrap();
            let expected = CMat::from_row_slice(2, 2, &[c(1.0), c(-1.0), c(-1.0), c(1.0)]);
            assert!((d - expected).norm() < 1e-12 * n as f64);
        }
    }

    #[test]
    fn laplacian_at_minus_one_converges() {
        let s = 1f64.sinh();
        let exact = CMat::from_row_slice(
            2,
            2,
            &[
                c(1f64.cosh() / s),
                c(-1.0 / s),
                c(-1.0 / s),
                c(1f64.cosh() / s),
            ],
        );
        let errs: Vec<f64> = [25, 50, 100]
            .iter()
            .map(|&n| {
                let (f, p) = setup_1d(n, c(0.0));
                (dtn_eval(&f, &p, c(-1.0)).unwrap() - &exact).norm()
            })
            .collect();
        assert!(errs[0] < 1e-2);
        for w in errs.windows(2) {
            assert!((w[0] / w[1]).log2() >= 1.0, "{errs:?}");
        }
    }

    #[test]
    fn dirichlet_eigenvalue_is_rejected() {
        let (f, p) = setup_1d(10, c(0.0));
        let err = dtn_eval(&f, &p, p.spectrum[0]).unwrap_err();
        assert!(matches!(err, Error::ResolventViolation { .. }));
    }

    #[test]
    fn columns_are_conormals_of_extensions() {
        let (f, p) = setup_2d(4);
        let lambda = C64::new(-0.5, 1.0);
        let d = dtn_eval(&f, &p, lambda).unwrap();
        let n = f.num_boundary();
        for j in 0..n {
            let mut e = CVec::zeros(n);
            e[j] = c(1.0);
            let u = solve_homogeneous_bvp(&f, &p, lambda, &e).unwrap();
            let g =
                assembly::conormal(&u, &CVec::zeros(f.num_dofs()), lambda, &f, FormSide::Primal)
                    .unwrap();
            assert!((g.values - d.column(j)).norm() < 1e-12 * d.norm());
        }
    }

    #[test]
    fn adjoint_is_conjugate_transpose() {
        let (f, p) = setup_2d(5);
        for lambda in [C64::new(0.3, -0.7), C64::new(-2.0, 0.0), C64::new(4.0, 3.0)] {
            let d = dtn_eval(&f, &p, lambda).unwrap();
            let dt = adjoint_dtn_eval(&f, &p, lambda.conj()).unwrap();
            assert!((dt - d.adjoint()).norm() < 1e-12 * d.norm());
        }
        let (f, p) = setup_1d(12, c(0.0));
        let d = dtn_eval(&f, &p, c(-3.0)).unwrap();
        let dt = adjoint_dtn_eval(&f, &p, c(-3.0)).unwrap();
        assert!((d - dt).norm() < 1e-13);
    }

    #[test]
    fn imaginary_potential_duality_entrywise() {
        let (f, p) = setup_1d(8, C64::new(0.0, 1.0));
        let lambda = C64::new(1.0, 0.5);
        let d = dtn_eval(&f, &p, lambda).unwrap();
        let dt = adjoint_dtn_eval(&f, &p, lambda.conj()).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((dt[(i, j)] - d[(j, i)].conj()).norm() < 1e-13 * d.norm());
            }
        }
        assert!(d.iter().any(|z| z.im.abs() > 1e-3));
    }

    #[test]
    fn nodal_representation() {
        let (f, p) = setup_1d(9, c(0.5));
        let lambda = c(-0.4);
        assert_eq!(
            dtn_nodal(&f, &p, lambda).unwrap(),
            dtn_eval(&f, &p, lambda).unwrap()
        );

        let (f, p) = setup_2d(4);
        let lambda = C64::new(0.2, 0.1);
        let nodal = dtn_nodal(&f, &p, lambda).unwrap();
        let dual = dtn_eval(&f, &p, lambda).unwrap();
        // uniform 4×4 grid on the unit square: edge length 1/4
        let n = f.num_boundary();
        assert!((&f.mass_boundary * &nodal - &dual).norm() < 1e-12 * dual.norm());
        let row_sum: Vec<f64> = (0..n)
            .map(|i| f.mass_boundary.row(i).iter().map(|z| z.re).sum())
            .collect();
        for s in row_sum {
            assert!((s - 0.25).abs() < 1e-14);
        }
        let phi = CVec::from_fn(n, |i, _| C64::new((i as f64).sin(), (i as f64).cos()));
        let u = solve_homogeneous_bvp(&f, &p, lambda, &phi).unwrap();
        let psi = &nodal * &phi;
        for k in 0..f.num_dofs() {
            let g = CVec::from_fn(f.num_dofs(), |i, _| {
                C64::new(((i * k) % 7) as f64, (i + k) as f64 * 0.1)
            });
            let lhs = g.dotc(&(&f.k * &u - (&f.mass * &u) * lambda));
            let tg = assembly::trace(&g, &f).unwrap();
            let rhs = tg.dotc(&(&f.mass_boundary * &psi));
            assert!((lhs - rhs).norm() < 1e-12 * (g.norm() * psi.norm() * f.k_norm()));
        }
    }

    #[test]
    fn taylor_order_zero_matches_eval() {
        let (f, p) = setup_2d(4);
        let lambda0 = C64::new(1.0, -1.0);
        let t = dtn_derivatives_taylor(&f, &p, lambda0, 0).unwrap();
        assert_eq!(t.matrices.len(), 1);
        assert!(
            (&t.matrices[0] - dtn_eval(&f, &p, lambda0).unwrap()).norm()
                < 1e-13 * t.matrices[0].norm()
        );
    }

    #[test]
    fn two_segment_scalar_oracle() {
        let (f, p) = setup_1d(2, c(0.0));
        // h = 1/2: interior entry a(λ) = 4 - λ/3, coupling b(λ) = -2 - λ/12,
        // boundary diagonal 2 - λ/6; S(λ) = diag(2 - λ/6) - (b²/a)·𝟙𝟙ᵀ
        let lambda0 = C64::new(0.7, 0.2);
        let a = c(4.0) - lambda0 / 3.0;
        let b = c(-2.0) - lambda0 / 12.0;
        let (da, db) = (c(-1.0 / 3.0), c(-1.0 / 12.0));
        let g0 = b * b / a;
        let num = b * db * a * 2.0 - b * b * da;
        let g1 = num / (a * a);
        let dnum = db * db * a * 2.0;
        let g2 = (dnum * a - num * da * 2.0) / (a * a * a);
        let ones = CMat::from_element(2, 2, c(1.0));
        let eye = CMat::identity(2, 2);
        let expected = [
            &eye * (c(2.0) - lambda0 / 6.0) - &ones * g0,
            &eye * c(-1.0 / 6.0) - &ones * g1,
            -&ones * g2,
        ];
        let t = dtn_derivatives_taylor(&f, &p, lambda0, 2).unwrap();
        for (got, want) in t.matrices.iter().zip(&expected) {
            assert!(
                (got - want).norm() < 1e-13 * want.norm().max(1.0),
                "{got} vs {want}"
            );
        }
    }

    #[test]
    fn first_derivative_matches_finite_difference() {
        let (f, p) = setup_1d(20, C64::new(0.0, 1.0));
        let lambda0 = c(-1.0);
        let delta = 1e-6;
        let t = dtn_derivatives_taylor(&f, &p, lambda0, 1).unwrap();
        let fd = (dtn_eval(&f, &p, lambda0 + delta).unwrap() - dtn_eval(&f, &p, lambda0).unwrap())
            .unscale(delta);
        assert!(relative_difference(&fd, &t.matrices[1]) < 1e-5);
    }

    #[test]
    fn taylor_remainder_decays() {
        let (f, p) = setup_2d(4);
        let lambda0 = C64::new(0.0, 0.5);
        let order = 3;
        let t = dtn_derivatives_taylor(&f, &p, lambda0, order).unwrap();
        let dir = C64::from_polar(1.0, 0.3);
        let errs: Vec<f64> = [0.4, 0.2, 0.1]
            .iter()
            .map(|&r| {
                (dtn_eval(&f, &p, lambda0 + dir * r).unwrap() - t.taylor_eval(lambda0 + dir * r))
                    .norm()
            })
            .collect();
        for w in errs.windows(2) {
            let rate = (w[0] / w[1]).log2();
            assert!(rate > order as f64 + 0.5, "{errs:?}");
        }
    }

    #[test]
    fn contour_agrees_with_taylor() {
        for (f, p) in [setup_1d(30, C64::new(0.3, 1.0)), setup_2d(5)] {
            let lambda0 = C64::new(1.0, 0.5);
            let t = dtn_derivatives_taylor(&f, &p, lambda0, 4).unwrap();
            let r = default_contour_radius(&p, lambda0);
            let q = dtn_derivatives_contour(&f, &p, lambda0, 4, r, DEFAULT_CONTOUR_NODES).unwrap();
            for l in 0..=4 {
                let d = relative_difference(&t.matrices[l], &q.matrices[l]);
                assert!(d < 1e-8, "order {l}: {d}");
            }
        }
    }

    #[test]
    fn contour_through_spectrum_is_rejected() {
        let (f, p) = setup_1d(10, c(0.0));
        let lambda0 = c(5.0);
        let r = (p.spectrum[0] - lambda0).norm() + 0.1;
        let err = dtn_derivatives_contour(&f, &p, lambda0, 2, r, 32).unwrap_err();
        assert!(matches!(err, Error::ContourViolation { .. }));
    }

    #[test]
    fn order_cap_enforced() {
        let (f, p) = setup_1d(4, c(0.0));
        assert!(matches!(
            dtn_derivatives_taylor(&f, &p, c(0.0), ORDER_CAP + 1),
            Err(Error::Order { .. })
        ));
        assert!(dtn_derivatives_taylor(&f, &p, c(0.0), ORDER_CAP).is_ok());
    }

    #[test]
    fn resolvent_identity() {
        let (f, p) = setup_2d(4);
        let (l0, l1) = (C64::new(-1.0, 0.0), C64::new(2.0, 1.0));
        let n = f.num_boundary();
        let phi = CVec::from_fn(n, |i, _| C64::new(1.0 + i as f64, -(i as f64) * 0.5));
        let g0 = solve_homogeneous_bvp(&f, &p, l0, &phi).unwrap();
        let g1 = solve_homogeneous_bvp(&f, &p, l1, &phi).unwrap();
        let r = crate::realizations::dirichlet_resolvent(&f, &p, l1, &g0).unwrap();
        let rhs = &g0 + r * (l1 - l0);
        assert!((g1 - &rhs).norm() < 1e-12 * rhs.norm());
    }
}
