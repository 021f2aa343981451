//! Checkable reports for the correspondence between Jordan chains of the
//! Robin realization and Keldysh chains of `λ ↦ D(λ) - B`, and for the
//! discrete identities it rests on.
//!
//! Every report is a list of named residuals with tolerances; a report passes
//! iff every residual is at most its tolerance.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::assembly::{self, FormMatrices, FormSide};
use crate::dtn::{self, DtnDerivatives};
use crate::keldysh::{self, ChainNormalization, JordanChain, KeldyshChain};
use crate::linalg::{self, SvdSplit};
use crate::realizations::{self, BoundaryOperator, DirichletPencil, ShiftedInterior};
use crate::{CMat, CVec, Error, Result, Tolerances, C64};

/// Factor applied to `‖f₀‖` when deciding that a trace is nonzero.
const NONZERO_FACTOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.residual <= self.tolerance
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub name: String,
    pub passed: bool,
    pub lambda0: Option<C64>,
    pub checks: Vec<Check>,
    /// Auxiliary numbers such as chain lengths, kernel dimensions and
    /// resolvent margins.
    pub context: Vec<(String, f64)>,
}

impl VerificationReport {
    pub fn new(name: &str, lambda0: Option<C64>) -> Self {
        Self {
            name: name.to_string(),
            passed: true,
            lambda0,
            checks: Vec::new(),
            context: Vec::new(),
        }
    }

    pub fn check(&mut self, name: impl Into<String>, residual: f64, tolerance: f64) {
        let c = Check {
            name: name.into(),
            residual,
            tolerance,
        };
        self.passed &= c.passed();
        self.checks.push(c);
    }

    pub fn note(&mut self, key: impl Into<String>, value: f64) {
        self.context.push((key.into(), value));
    }

    pub fn max_residual(&self) -> f64 {
        self.checks.iter().map(|c| c.residual).fold(0.0, f64::max)
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed())
    }
}

fn relative(value: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        value / scale
    } else {
        value
    }
}

fn indexed(prefix: &str, j: usize) -> String {
    let mut s = String::from(prefix);
    s.push('_');
    s.push_str(&j.to_string());
    s
}

fn check_centre(derivs: &DtnDerivatives, lambda0: C64, needed: usize) -> Result<()> {
    if derivs.lambda0 != lambda0 {
        return Err(Error::Construction(
            "derivatives are not taken at the chain eigenvalue".into(),
        ));
    }
    if derivs.order < needed {
        return Err(Error::Order {
            requested: needed,
            limit: derivs.order,
        });
    }
    Ok(())
}

fn traces(forms: &FormMatrices, vectors: &[CVec]) -> Result<Vec<CVec>> {
    vectors.iter().map(|f| assembly::trace(f, forms)).collect()
}

/// From a Jordan chain of the Robin pencil to the traces
/// `φ_m = Tr f_m`, checked as a Keldysh chain of `D(λ) - B`.
pub fn theorem_main_forward(
    forms: &FormMatrices,
    pencil: &DirichletPencil,
    b: &BoundaryOperator,
    chain: &JordanChain,
    derivs: &DtnDerivatives,
    tol: &Tolerances,
) -> Result<(KeldyshChain, VerificationReport)> {
    let lambda0 = chain.lambda0;
    let shifted = pencil.factor(FormSide::Primal, lambda0)?;
    check_centre(derivs, lambda0, chain.len().saturating_sub(1))?;

    let mut report = VerificationReport::new("theorem_main_forward", Some(lambda0));
    report.note("chain_length", chain.len() as f64);
    report.note("resolvent_margin", shifted.margin);
    let phis = traces(forms, &chain.vectors)?;
    if let (Some(f0), Some(p0)) = (chain.vectors.first(), phis.first()) {
        report.check(
            "phi0_nonzero",
            relative(NONZERO_FACTOR * f0.norm(), p0.norm()),
            1.0,
        );
    }

    let coeffs = keldysh::keldysh_coefficients(forms, derivs, b);
    let residuals = keldysh::series_residuals(&coeffs, &phis);
    for (j, r) in residuals.iter().enumerate() {
        report.check(indexed("keldysh_level", j), *r, tol.theorem);
    }

    // Σ (1/l!) D^(l)(λ₀) φ_{j-l} = B φ_j, evaluated as two separate sides.
    let taylor = derivs.coefficients();
    let b_dual = b.dual(forms);
    for j in 0..phis.len() {
        let mut lhs = CVec::zeros(forms.num_boundary());
        let mut scale = 0.0;
        for l in 0..=j {
            lhs += &taylor[l] * &phis[j - l];
            scale += linalg::frobenius(&taylor[l]) * phis[j - l].norm();
        }
        let rhs = &b_dual * &phis[j];
        scale += linalg::frobenius(&b_dual) * phis[j].norm();
        report.check(
            indexed("boundary_equation", j),
            relative((lhs - rhs).norm(), scale),
            tol.theorem,
        );
    }

    let kchain = KeldyshChain {
        lambda0,
        vectors: phis,
        residuals,
    };
    Ok((kchain, report))
}

/// From a Keldysh chain of `D(λ) - B` to a Jordan chain of the Robin
/// realization, reconstructed by boundary value solves:
/// `f₀` solves the homogeneous problem with trace `φ₀`, and `f_m` solves
/// `(A - λ₀) f_m = f_{m-1}` with trace `φ_m`.
pub fn theorem_main_backward(
    forms: &FormMatrices,
    pencil: &DirichletPencil,
    b: &BoundaryOperator,
    kchain: &KeldyshChain,
    tol: &Tolerances,
) -> Result<(JordanChain, VerificationReport)> {
    let lambda0 = kchain.lambda0;
    let shifted = pencil.factor(FormSide::Primal, lambda0)?;
    let mut report = VerificationReport::new("theorem_main_backward", Some(lambda0));
    report.note("chain_length", kchain.len() as f64);
    report.note("resolvent_margin", shifted.margin);

    let mut vectors: Vec<CVec> = Vec::with_capacity(kchain.len());
    for (m, phi) in kchain.vectors.iter().enumerate() {
        let f = match vectors.last() {
            None => shifted.homogeneous(forms, phi)?,
            Some(prev) => shifted.inhomogeneous(forms, phi, prev)?,
        };
        let h = vectors
            .last()
            .cloned()
            .unwrap_or_else(|| CVec::zeros(forms.num_dofs()));
        let membership = realizations::robin_domain_residual(forms, b, &f, &h, lambda0)?;
        report.check(indexed("robin_condition", m), membership, tol.theorem);
        vectors.push(f);
    }

    let k_b = assembly::robin_matrix(forms, Some(b));
    let residuals = keldysh::pencil_residuals(&k_b, &forms.mass, lambda0, &vectors);
    for (m, r) in residuals.iter().enumerate() {
        report.check(indexed("pencil_link", m), *r, tol.chain);
    }
    let chain = JordanChain {
        lambda0,
        vectors,
        residuals,
        normalization: ChainNormalization::BoundaryData,
    };
    Ok((chain, report))
}

/// Kernel dimensions of `K_B - λ₀M` and `D(λ₀) - B` and the bijectivity of
/// the trace between the two kernels.
pub fn birman_schwinger_check(
    forms: &FormMatrices,
    pencil: &DirichletPencil,
    b: &BoundaryOperator,
    lambda0: C64,
    tol: &Tolerances,
) -> Result<VerificationReport> {
    let shifted = pencil.factor(FormSide::Primal, lambda0)?;
    let mut report = VerificationReport::new("birman_schwinger", Some(lambda0));
    report.note("resolvent_margin", shifted.margin);

    let k_b = assembly::robin_matrix(forms, Some(b));
    let pencil_kernel =
        SvdSplit::new(&(&k_b - forms.mass.map(|m| m * lambda0)), tol.rank).nullspace();
    let d = dtn::dtn_eval(forms, pencil, lambda0)?;
    let boundary_kernel = SvdSplit::new(&(d - b.dual(forms)), tol.rank).nullspace();
    let (dp, db) = (pencil_kernel.ncols(), boundary_kernel.ncols());
    report.note("pencil_kernel_dimension", dp as f64);
    report.note("boundary_kernel_dimension", db as f64);
    report.check("kernel_dimensions", dp.abs_diff(db) as f64, 0.0);

    if dp > 0 {
        let tr = linalg::select(
            &pencil_kernel,
            &forms.boundary,
            &(0..dp).collect::<Vec<_>>(),
        );
        let s = SvdSplit::new(&tr, None);
        let (smax, smin) = (s.sigma_max(), s.singular_values[dp.min(tr.nrows()) - 1]);
        report.check("trace_injective", relative(tol.theorem * smax, smin), 1.0);
        let outside = &tr - &boundary_kernel * (boundary_kernel.adjoint() * &tr);
        report.check(
            "trace_into_kernel",
            relative(outside.norm(), tr.norm()),
            tol.theorem,
        );
    }
    Ok(report)
}

fn adjoint_solutions(
    forms: &FormMatrices,
    pencil: &DirichletPencil,
    lambda0: C64,
) -> Result<Vec<CVec>> {
    let shifted = pencil.factor(FormSide::Dual, lambda0.conj())?;
    let n = forms.num_boundary();
    (0..n)
        .map(|i| {
            let mut e = CVec::zeros(n);
            e[i] = C64::new(1.0, 0.0);
            shifted.homogeneous(forms, &e)
        })
        .collect()
}

/// The two identities linking a Jordan chain to its traces through the
/// adjoint homogeneous solutions `g` with `Tr g = φ`, checked for every
/// boundary basis vector `φ`:
///
/// ```text
/// (f_{j-1}, g) = ⟨D(λ₀)φ_j - Bφ_j, φ⟩,                j = 0 … k,
/// (f_{j-1}, g) = -Σ_{l=1}^{j} (1/l!) ⟨D^(l)(λ₀)φ_{j-l}, φ⟩,   j = 1 … k+1,
/// ```
///
/// with `f_{-1} = 0`.
pub fn mainlem_identity_check(
    forms: &FormMatrices,
    pencil: &DirichletPencil,
    b: &BoundaryOperator,
    chain: &JordanChain,
    derivs: &DtnDerivatives,
    tol: &Tolerances,
) -> Result<VerificationReport> {
    let lambda0 = chain.lambda0;
    let k = chain.len();
    check_centre(derivs, lambda0, k)?;
    let shifted = pencil.factor(FormSide::Primal, lambda0)?;
    let mut report = VerificationReport::new("mainlem_identities", Some(lambda0));
    report.note("chain_length", k as f64);
    report.note("resolvent_margin", shifted.margin);

    let gs = adjoint_solutions(forms, pencil, lambda0)?;
    let phis = traces(forms, &chain.vectors)?;
    let taylor = derivs.coefficients();
    let m_b = &taylor[0] - b.dual(forms);
    let mass_norm = forms.mass_norm();
    let zero = CVec::zeros(forms.num_dofs());
    let prev = |j: usize| if j == 0 { &zero } else { &chain.vectors[j - 1] };

    for (j, phi) in phis.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for (i, g) in gs.iter().enumerate() {
            let lhs = forms.l2_inner(prev(j), g);
            let rhs = (&m_b * phi)[i];
            let scale =
                mass_norm * prev(j).norm() * g.norm() + linalg::frobenius(&m_b) * phi.norm();
            worst = worst.max(relative((lhs - rhs).norm(), scale));
        }
        report.check(indexed("useful", j), worst, tol.theorem);
    }
    for j in 1..=k {
        let mut worst: f64 = 0.0;
        for (i, g) in gs.iter().enumerate() {
            let lhs = forms.l2_inner(prev(j), g);
            let mut sum = C64::new(0.0, 0.0);
            let mut scale = mass_norm * prev(j).norm() * g.norm();
            for l in 1..=j {
                sum += (&taylor[l] * &phis[j - l])[i];
                scale += linalg::frobenius(&taylor[l]) * phis[j - l].norm();
            }
            worst = worst.max(relative((lhs + sum).norm(), scale));
        }
        report.check(indexed("derivative_pairing", j), worst, tol.theorem);
    }
    Ok(report)
}

/// The identity
///
/// ```text
/// -(f_{j-1}, g_λ̄) = Σ_{l=1}^{j} ⟨(λ-λ₀)^{-l} (D(λ) - Σ_{s<l} (λ-λ₀)^s/s! D^(s)(λ₀)) φ_{j-l}, φ⟩
/// ```
///
/// at each `λ` of `lambdas` (all different from `λ₀`), for `j = 1 … k+1` and
/// every boundary basis vector `φ`.
pub fn formula_spot_check(
    forms: &FormMatrices,
    pencil: &DirichletPencil,
    chain: &JordanChain,
    derivs: &DtnDerivatives,
    lambdas: &[C64],
    tolerance: f64,
) -> Result<VerificationReport> {
    let lambda0 = chain.lambda0;
    let k = chain.len();
    check_centre(derivs, lambda0, k.saturating_sub(1))?;
    let mut report = VerificationReport::new("telescoped_identity", Some(lambda0));
    let phis = traces(forms, &chain.vectors)?;
    let taylor = derivs.coefficients();
    let mass_norm = forms.mass_norm();

    for (idx, &lambda) in lambdas.iter().enumerate() {
        let delta = lambda - lambda0;
        if delta.norm() == 0.0 {
            return Err(Error::Construction(
                "spot-check point coincides with the eigenvalue".into(),
            ));
        }
        let d = dtn::dtn_eval(forms, pencil, lambda)?;
        let gs = adjoint_solutions(forms, pencil, lambda)?;
        // remainders[l] = (λ-λ₀)^{-l} (D(λ) - Σ_{s<l} δ^s c_s)
        let mut remainders: Vec<CMat> = Vec::with_capacity(k + 1);
        let mut partial = d.clone();
        let mut power = C64::new(1.0, 0.0);
        for l in 0..=k {
            if l > 0 {
                partial -= &taylor[l - 1] * power;
                power *= delta;
                remainders.push(&partial / power);
            } else {
                remainders.push(d.clone());
            }
        }
        let mut worst: f64 = 0.0;
        for j in 1..=k {
            for (i, g) in gs.iter().enumerate() {
                let lhs = -forms.l2_inner(&chain.vectors[j - 1], g);
                let mut rhs = C64::new(0.0, 0.0);
                let mut scale = mass_norm * chain.vectors[j - 1].norm() * g.norm();
                for l in 1..=j {
                    rhs += (&remainders[l] * &phis[j - l])[i];
                    scale += linalg::frobenius(&remainders[l]) * phis[j - l].norm();
                }
                worst = worst.max(relative((lhs - rhs).norm(), scale));
            }
        }
        report.note(indexed("distance", idx), delta.norm());
        report.check(indexed("point", idx), worst, tolerance);
    }
    Ok(report)
}

/// Green's second identity
/// `(𝒜f, g) - (f, 𝒜̃g) = ⟨Tr f, γ̃_N g⟩ - ⟨γ_N f, Tr g⟩`
/// for `𝒜f = λ_f f + h_f` and `𝒜̃g = λ_g g + h_g`.
#[allow(clippy::too_many_arguments)]
pub fn greens_identity_check(
    forms: &FormMatrices,
    f: &CVec,
    h_f: &CVec,
    lambda_f: C64,
    g: &CVec,
    h_g: &CVec,
    lambda_g: C64,
    tol: &Tolerances,
    tolerance: f64,
) -> Result<VerificationReport> {
    let gamma_f = assembly::conormal_with_tolerance(
        f,
        h_f,
        lambda_f,
        forms,
        FormSide::Primal,
        tol.consistency,
    )?;
    let gamma_g = assembly::conormal_with_tolerance(
        g,
        h_g,
        lambda_g,
        forms,
        FormSide::Dual,
        tol.consistency,
    )?;
    let tf = assembly::trace(f, forms)?;
    let tg = assembly::trace(g, forms)?;
    let af = f * lambda_f + h_f;
    let ag = g * lambda_g + h_g;
    let lhs = forms.l2_inner(&af, g) - forms.l2_inner(f, &ag);
    let rhs = gamma_g.pair(forms, &tf).conj() - gamma_f.pair(forms, &tg);
    let scale = (forms.k_norm() * f.norm()
        + forms.mass_norm() * (lambda_f.norm() * f.norm() + h_f.norm()))
        * g.norm()
        + forms.mass_norm() * (lambda_g.norm() * g.norm() + h_g.norm()) * f.norm();
    let mut report = VerificationReport::new("greens_second_identity", None);
    report.check(
        "green_second",
        relative((lhs - rhs).norm(), scale),
        tolerance,
    );
    Ok(report)
}

/// `K* = Kᴴ` for the independently assembled dual form.
pub fn dual_form_check(forms: &FormMatrices, tolerance: f64) -> VerificationReport {
    let mut report = VerificationReport::new("dual_form", None);
    let diff = (&forms.k_dual - forms.k.adjoint()).norm();
    report.check("dual_is_adjoint", relative(diff, forms.k_norm()), tolerance);
    report
}

/// `D̃(λ̄) = D(λ)ᴴ` at every `λ` of `lambdas`.
pub fn dtn_duality_check(
    forms: &FormMatrices,
    pencil: &DirichletPencil,
    lambdas: &[C64],
    tolerance: f64,
) -> Result<VerificationReport> {
    let mut report = VerificationReport::new("dtn_duality", None);
    for (i, &lambda) in lambdas.iter().enumerate() {
        let d = dtn::dtn_eval(forms, pencil, lambda)?;
        let dt = dtn::adjoint_dtn_eval(forms, pencil, lambda.conj())?;
        report.check(
            indexed("point", i),
            relative((dt - d.adjoint()).norm(), d.norm()),
            tolerance,
        );
    }
    Ok(report)
}

/// `a(f, g) - λ(f, g) = (𝒟(λ)φ, Tr g)_{L₂(Γ)}` for `f` the homogeneous
/// solution with trace `φ`, tested against every nodal basis function `g`.
pub fn form_representation_check(
    forms: &FormMatrices,
    pencil: &DirichletPencil,
    lambda: C64,
    phis: &[CVec],
    tolerance: f64,
) -> Result<VerificationReport> {
    let shifted = pencil.factor(FormSide::Primal, lambda)?;
    let nodal = dtn::dtn_nodal(forms, pencil, lambda)?;
    let mut report = VerificationReport::new("form_representation", Some(lambda));
    for (i, phi) in phis.iter().enumerate() {
        let f = shifted.homogeneous(forms, phi)?;
        let psi = &nodal * phi;
        // row g = e_node of a(f, g) - λ(f, g)
        let form = &forms.k * &f - (&forms.mass * &f) * lambda;
        let boundary = &forms.mass_boundary * &psi;
        let mut expected = CVec::zeros(forms.num_dofs());
        for (r, &node) in forms.boundary.iter().enumerate() {
            expected[node] = boundary[r];
        }
        let scale = forms.k_norm() * f.norm() + forms.mass_norm() * lambda.norm() * f.norm();
        report.check(
            indexed("vector", i),
            relative((form - expected).norm(), scale),
            tolerance,
        );
    }
    Ok(report)
}

/// Homogeneous solutions at `λ` against the resolvent correction of those at
/// `λ₀`: `g_λ = g_λ₀ + (λ - λ₀)(A_D - λ)⁻¹ g_λ₀`.
pub fn resolvent_identity_check(
    forms: &FormMatrices,
    pencil: &DirichletPencil,
    lambda: C64,
    lambda0: C64,
    phis: &[CVec],
    tolerance: f64,
) -> Result<VerificationReport> {
    let at: ShiftedInterior = pencil.factor(FormSide::Primal, lambda)?;
    let at0 = pencil.factor(FormSide::Primal, lambda0)?;
    let mut report = VerificationReport::new("resolvent_identity", Some(lambda0));
    for (i, phi) in phis.iter().enumerate() {
        let g = at.homogeneous(forms, phi)?;
        let g0 = at0.homogeneous(forms, phi)?;
        let corrected = &g0 + at.dirichlet_resolvent(forms, &g0)? * (lambda - lambda0);
        report.check(
            indexed("vector", i),
            relative((g - &corrected).norm(), corrected.norm()),
            tolerance,
        );
    }
    Ok(report)
}

/// Taylor-recurrence against contour derivatives (default radius and node
/// count) for orders `0 … order`.
pub fn derivative_cross_check(
    forms: &FormMatrices,
    pencil: &DirichletPencil,
    lambda0: C64,
    order: usize,
    tolerance: f64,
) -> Result<VerificationReport> {
    let taylor = dtn::dtn_derivatives_taylor(forms, pencil, lambda0, order)?;
    let radius = dtn::default_contour_radius(pencil, lambda0);
    let contour = dtn::dtn_derivatives_contour(
        forms,
        pencil,
        lambda0,
        order,
        radius,
        dtn::DEFAULT_CONTOUR_NODES,
    )?;
    let mut report = VerificationReport::new("derivative_cross_check", Some(lambda0));
    report.note("contour_radius", radius);
    for l in 0..=order {
        report.check(
            indexed("order", l),
            dtn::relative_difference(&taylor.matrices[l], &contour.matrices[l]),
            tolerance,
        );
    }
    Ok(report)
}

/// Ellipticity certificate `ν` for `mu_target` with an independent check
/// that `Herm(K_B) + νM - μH¹` has no negative eigenvalue.
pub fn ellipticity_check(
    forms: &FormMatrices,
    b: Option<&BoundaryOperator>,
    mu_target: f64,
) -> Result<VerificationReport> {
    let nu = assembly::ellipticity_certificate(forms, b, mu_target)?;
    let cert = assembly::certificate_matrix(forms, b, mu_target, nu);
    let ev = linalg::hermitian_eigenvalues(&cert);
    let lowest = ev.first().copied().unwrap_or(0.0);
    let scale = linalg::norm2(&cert).max(f64::MIN_POSITIVE);
    let mut report = VerificationReport::new("ellipticity_certificate", None);
    report.note("nu", nu);
    report.note("mu", mu_target);
    report.note("lowest_eigenvalue", lowest);
    report.check(
        "nu_finite",
        if nu.is_finite() { 0.0 } else { f64::INFINITY },
        0.0,
    );
    report.check(
        "certificate_psd",
        (-lowest).max(0.0) / scale,
        1e3 * linalg::EPS,
    );
    Ok(report)
}
