//! The experiment pipeline: instance, chains on both sides, and every
//! verification report.

use dtnkit_core::assembly::FormSide;
use dtnkit_core::dtn::{self, DtnDerivatives};
use dtnkit_core::keldysh::{self, ChainOptions, JordanChain, KeldyshChain};
use dtnkit_core::realizations::robin_pencil;
use dtnkit_core::verify::{self, VerificationReport};
use dtnkit_core::{linalg, CVec, Error, C64};
use rayon::prelude::*;

use crate::config::{Complex, ExperimentConfig, ToleranceOverrides};
use crate::instance::{self, Draws, Instance, StageError};
use crate::report::{
    ChainRecord, InstanceSummary, ReportRecord, RunReport, SpectrumEntry, REPORT_SCHEMA_VERSION,
};

/// Seed of the probe vectors used by the identity checks.
pub const PROBE_SEED: u64 = 0x5eed_0001;

/// Threshold of the exact discrete identities.
pub const EXACT_TOLERANCE: f64 = 1e-12;
/// Threshold of the resolvent identity.
pub const RESOLVENT_IDENTITY_TOLERANCE: f64 = 1e-10;
/// Threshold of the Taylor against contour derivative comparison.
pub const DERIVATIVE_TOLERANCE: f64 = 1e-8;
/// Highest derivative order compared against the contour rule.
pub const CROSS_CHECK_ORDER: usize = 4;
/// Threshold of the telescoped identity away from `λ₀`.
pub const SPOT_CHECK_TOLERANCE: f64 = 1e-6;

/// Names accepted by `--only`, in report order.
pub const REPORT_NAMES: &[&str] = &[
    "resolvent_set",
    "dual_form",
    "dtn_duality",
    "greens_second_identity",
    "form_representation",
    "resolvent_identity",
    "derivative_cross_check",
    "ellipticity_certificate",
    "birman_schwinger",
    "chain_profiles",
    "theorem_main_backward",
    "theorem_main_forward",
    "mainlem_identities",
    "telescoped_identity",
];

/// Spectral points near `λ₀` used by the identity checks: `λ₀` itself and
/// two points at half the contour radius.
fn probe_points(inst: &Instance) -> Vec<C64> {
    let r = 0.5 * dtn::default_contour_radius(&inst.pencil, inst.lambda0);
    let r = if r.is_finite() { r } else { 0.5 };
    let at = |angle: f64| inst.lambda0 + C64::from_polar(r, angle);
    vec![inst.lambda0, at(core::f64::consts::FRAC_PI_4), at(2.0)]
}

fn boundary_basis(n: usize) -> Vec<CVec> {
    (0..n)
        .map(|i| {
            let mut e = CVec::zeros(n);
            e[i] = C64::new(1.0, 0.0);
            e
        })
        .collect()
}

fn record(
    name: &str,
    subject: Option<String>,
    result: Result<VerificationReport, Error>,
) -> ReportRecord {
    match result {
        Ok(r) => ReportRecord::from_report(&r, subject),
        Err(e) => ReportRecord::failure(name, subject, &StageError::new(stage_name(name), e)),
    }
}

fn stage_name(name: &str) -> &'static str {
    REPORT_NAMES
        .iter()
        .copied()
        .find(|n| *n == name)
        .unwrap_or("report")
}

fn resolvent_report(inst: &Instance) -> Result<VerificationReport, Error> {
    let shifted = inst.pencil.factor(FormSide::Primal, inst.lambda0)?;
    let mut r = VerificationReport::new("resolvent_set", Some(inst.lambda0));
    r.note("resolvent_margin", shifted.margin);
    r.note(
        "distance_to_spectrum",
        inst.pencil.distance_to_spectrum(inst.lambda0),
    );
    r.check(
        "margin_ratio",
        inst.pencil.tol_resolvent / shifted.margin,
        1.0,
    );
    Ok(r)
}

fn greens_report(inst: &Instance, lambdas: &[C64]) -> Result<VerificationReport, Error> {
    let forms = &inst.forms;
    let mut draws = Draws::new(PROBE_SEED);
    let (lambda_f, lambda_g) = (lambdas[0], lambdas[1].conj());
    let primal = inst.pencil.factor(FormSide::Primal, lambda_f)?;
    let dual = inst.pencil.factor(FormSide::Dual, lambda_g)?;
    let n = forms.num_dofs();
    let h_f = draws.vector(n);
    let h_g = draws.vector(n);
    let f = primal.inhomogeneous(forms, &draws.vector(forms.num_boundary()), &h_f)?;
    let g = dual.inhomogeneous(forms, &draws.vector(forms.num_boundary()), &h_g)?;
    verify::greens_identity_check(
        forms,
        &f,
        &h_f,
        lambda_f,
        &g,
        &h_g,
        lambda_g,
        &inst.tolerances,
        EXACT_TOLERANCE,
    )
}

fn chain_options(inst: &Instance) -> ChainOptions {
    ChainOptions {
        max_len: inst.chain_order,
        tol_rank: inst.tolerances.rank,
        tol_chain: inst.tolerances.chain,
    }
}

struct Chains {
    derivs: DtnDerivatives,
    keldysh: Vec<KeldyshChain>,
    jordan: Vec<JordanChain>,
}

fn compute_chains(inst: &Instance) -> Result<Chains, StageError> {
    let forms = &inst.forms;
    let opts = chain_options(inst);
    let derivs = dtn::dtn_derivatives_taylor(forms, &inst.pencil, inst.lambda0, inst.chain_order)
        .map_err(|e| StageError::new("dtn_derivatives", e))?;
    let keldysh = keldysh::keldysh_chains(forms, &derivs, &inst.boundary, &opts)
        .map_err(|e| StageError::new("keldysh_chains", e))?;
    let k_b = dtnkit_core::assembly::robin_matrix(forms, Some(&inst.boundary));
    let jordan = keldysh::pencil_jordan_chains(&k_b, &forms.mass, inst.lambda0, &opts);
    Ok(Chains {
        derivs,
        keldysh,
        jordan,
    })
}

fn profile_report(inst: &Instance, chains: &Chains) -> VerificationReport {
    let kp = keldysh::length_profile(&chains.keldysh, KeldyshChain::len);
    let jp = keldysh::length_profile(&chains.jordan, JordanChain::len);
    let mut r = VerificationReport::new("chain_profiles", Some(inst.lambda0));
    r.note("keldysh_chains", kp.len() as f64);
    r.note("jordan_chains", jp.len() as f64);
    r.note("keldysh_total_length", kp.iter().sum::<usize>() as f64);
    r.note("jordan_total_length", jp.iter().sum::<usize>() as f64);
    let mismatch = kp.len().max(jp.len()) - kp.iter().zip(&jp).filter(|(a, b)| a == b).count();
    r.check("profile_mismatch", mismatch as f64, 0.0);
    r
}

/// Backward reconstruction of a Keldysh chain followed by the forward
/// direction on the result; the forward report also compares the
/// reconstructed traces with the original boundary data.
fn round_trip(
    inst: &Instance,
    chains: &Chains,
    i: usize,
    kchain: &KeldyshChain,
) -> Vec<ReportRecord> {
    let subject = Some(format!("keldysh_{i}"));
    let (forms, pencil, b, tol) = (&inst.forms, &inst.pencil, &inst.boundary, &inst.tolerances);
    let (jchain, back) = match verify::theorem_main_backward(forms, pencil, b, kchain, tol) {
        Ok(x) => x,
        Err(e) => return vec![record("theorem_main_backward", subject, Err(e))],
    };
    let mut out = vec![ReportRecord::from_report(&back, subject.clone())];
    let forward = verify::theorem_main_forward(forms, pencil, b, &jchain, &chains.derivs, tol).map(
        |(again, mut fwd)| {
            let mut worst: f64 = 0.0;
            for (p, q) in again.vectors.iter().zip(&kchain.vectors) {
                worst = worst.max((p - q).norm() / q.norm().max(f64::MIN_POSITIVE));
            }
            fwd.check("trace_round_trip", worst, tol.theorem);
            fwd
        },
    );
    out.push(record("theorem_main_forward", subject, forward));
    out
}

fn jordan_reports(
    inst: &Instance,
    chains: &Chains,
    i: usize,
    chain: &JordanChain,
    only: Option<&str>,
) -> Vec<ReportRecord> {
    let subject = || Some(format!("jordan_{i}"));
    let (forms, pencil, b, tol) = (&inst.forms, &inst.pencil, &inst.boundary, &inst.tolerances);
    let wanted = |name: &str| only.is_none_or(|o| o == name);
    let mut out = Vec::new();
    if wanted("theorem_main_forward") {
        let r = verify::theorem_main_forward(forms, pencil, b, chain, &chains.derivs, tol)
            .map(|(_, r)| r);
        out.push(record("theorem_main_forward", subject(), r));
    }
    if wanted("mainlem_identities") {
        let r = verify::mainlem_identity_check(forms, pencil, b, chain, &chains.derivs, tol);
        out.push(record("mainlem_identities", subject(), r));
    }
    if wanted("telescoped_identity") {
        let radius = dtn::default_contour_radius(pencil, inst.lambda0);
        let points = [0.5, 0.25].map(|s| inst.lambda0 + C64::from_polar(s * radius, 1.0));
        let r = verify::formula_spot_check(
            forms,
            pencil,
            chain,
            &chains.derivs,
            &points,
            SPOT_CHECK_TOLERANCE,
        );
        out.push(record("telescoped_identity", subject(), r));
    }
    out
}

type Task<'a> = Box<dyn Fn() -> ReportRecord + Send + Sync + 'a>;

fn instance_reports<'a>(inst: &'a Instance, only: Option<&str>) -> Vec<ReportRecord> {
    let lambdas = probe_points(inst);
    let nb = inst.forms.num_boundary();
    let (forms, pencil, lambda0) = (&inst.forms, &inst.pencil, inst.lambda0);
    let tasks: Vec<(&str, Task<'a>)> = vec![
        (
            "resolvent_set",
            Box::new(move || record("resolvent_set", None, resolvent_report(inst))),
        ),
        (
            "dual_form",
            Box::new(move || {
                ReportRecord::from_report(&verify::dual_form_check(forms, EXACT_TOLERANCE), None)
            }),
        ),
        ("dtn_duality", {
            let l = lambdas.clone();
            Box::new(move || {
                record(
                    "dtn_duality",
                    None,
                    verify::dtn_duality_check(forms, pencil, &l, EXACT_TOLERANCE),
                )
            })
        }),
        ("greens_second_identity", {
            let l = lambdas.clone();
            Box::new(move || record("greens_second_identity", None, greens_report(inst, &l)))
        }),
        (
            "form_representation",
            Box::new(move || {
                let r = verify::form_representation_check(
                    forms,
                    pencil,
                    lambda0,
                    &boundary_basis(nb),
                    EXACT_TOLERANCE,
                );
                record("form_representation", None, r)
            }),
        ),
        ("resolvent_identity", {
            let l = lambdas[1];
            Box::new(move || {
                let r = verify::resolvent_identity_check(
                    forms,
                    pencil,
                    l,
                    lambda0,
                    &boundary_basis(nb),
                    RESOLVENT_IDENTITY_TOLERANCE,
                );
                record("resolvent_identity", None, r)
            })
        }),
        (
            "derivative_cross_check",
            Box::new(move || {
                let order = inst.chain_order.min(CROSS_CHECK_ORDER);
                let r = verify::derivative_cross_check(
                    forms,
                    pencil,
                    lambda0,
                    order,
                    DERIVATIVE_TOLERANCE,
                );
                record("derivative_cross_check", None, r)
            }),
        ),
        (
            "ellipticity_certificate",
            Box::new(move || {
                let r = verify::ellipticity_check(forms, Some(&inst.boundary), 0.5 * forms.mu);
                record("ellipticity_certificate", None, r)
            }),
        ),
        (
            "birman_schwinger",
            Box::new(move || {
                let r = verify::birman_schwinger_check(
                    forms,
                    pencil,
                    &inst.boundary,
                    lambda0,
                    &inst.tolerances,
                );
                record("birman_schwinger", None, r)
            }),
        ),
    ];
    tasks
        .par_iter()
        .filter(|(name, _)| only.is_none_or(|o| o == *name))
        .map(|(_, t)| t())
        .collect()
}

fn chain_records(chains: &Chains) -> Vec<ChainRecord> {
    let k = chains.keldysh.iter().enumerate().map(|(i, c)| ChainRecord {
        source: "keldysh".into(),
        index: i,
        length: c.len(),
        residuals: c
            .residuals
            .iter()
            .map(|&r| crate::report::finite(r))
            .collect(),
        vector_norms: c.vectors.iter().map(|v| v.norm()).collect(),
    });
    let j = chains.jordan.iter().enumerate().map(|(i, c)| ChainRecord {
        source: "jordan".into(),
        index: i,
        length: c.len(),
        residuals: c
            .residuals
            .iter()
            .map(|&r| crate::report::finite(r))
            .collect(),
        vector_norms: c.vectors.iter().map(|v| v.norm()).collect(),
    });
    k.chain(j).collect()
}

/// Dirichlet and Robin spectra sorted by distance to `λ₀`.
pub fn spectrum_entries(inst: &Instance) -> Result<Vec<SpectrumEntry>, StageError> {
    let robin = robin_pencil(&inst.forms, &inst.boundary)
        .map_err(|e| StageError::new("robin_pencil", e))?;
    let mut out = Vec::new();
    for (realization, values) in [
        ("dirichlet", &inst.pencil.spectrum),
        ("robin", &robin.spectrum),
    ] {
        let mut sorted = values.clone();
        linalg::sort_complex(&mut sorted);
        out.extend(
            sorted
                .into_iter()
                .enumerate()
                .map(|(index, value)| SpectrumEntry {
                    realization: realization.into(),
                    index,
                    value: Complex(value),
                    distance_to_lambda0: (value - inst.lambda0).norm(),
                }),
        );
    }
    Ok(out)
}

pub fn summarize(inst: &Instance) -> InstanceSummary {
    InstanceSummary {
        dimension: inst.domain.dimension(),
        num_dofs: inst.forms.num_dofs(),
        num_boundary: inst.forms.num_boundary(),
        h_max: inst.domain.h_max(),
        mu: inst.forms.mu,
        hermitian_form: inst.forms.hermitian,
        eta: inst.boundary.eta,
        lambda0: Complex(inst.lambda0),
        distance_to_dirichlet_spectrum: inst.pencil.distance_to_spectrum(inst.lambda0),
        chain_order: inst.chain_order,
        tolerances: (&inst.tolerances).into(),
    }
}

/// Runs every report (or only those named `only`) on a built instance.
pub fn run_instance(label: &str, inst: &Instance, only: Option<&str>) -> RunReport {
    let mut reports = instance_reports(inst, only);
    let mut spectrum = Vec::new();
    match spectrum_entries(inst) {
        Ok(s) => spectrum = s,
        Err(e) => reports.push(ReportRecord::failure("spectrum", None, &e)),
    }
    let wanted = |name: &str| only.is_none_or(|o| o == name);
    let chain_stage = [
        "chain_profiles",
        "theorem_main_backward",
        "theorem_main_forward",
        "mainlem_identities",
        "telescoped_identity",
    ];
    let (mut keldysh_profile, mut jordan_profile, mut chain_table) =
        (Vec::new(), Vec::new(), Vec::new());
    if chain_stage.iter().any(|n| wanted(n)) {
        match compute_chains(inst) {
            Ok(chains) => {
                keldysh_profile = keldysh::length_profile(&chains.keldysh, KeldyshChain::len);
                jordan_profile = keldysh::length_profile(&chains.jordan, JordanChain::len);
                chain_table = chain_records(&chains);
                if wanted("chain_profiles") {
                    reports.push(ReportRecord::from_report(
                        &profile_report(inst, &chains),
                        None,
                    ));
                }
                let per_keldysh: Vec<Vec<ReportRecord>> = chains
                    .keldysh
                    .par_iter()
                    .enumerate()
                    .map(|(i, c)| {
                        round_trip(inst, &chains, i, c)
                            .into_iter()
                            .filter(|r| wanted(&r.name))
                            .collect()
                    })
                    .collect();
                let per_jordan: Vec<Vec<ReportRecord>> = chains
                    .jordan
                    .par_iter()
                    .enumerate()
                    .map(|(i, c)| jordan_reports(inst, &chains, i, c, only))
                    .collect();
                reports.extend(per_keldysh.into_iter().flatten());
                reports.extend(per_jordan.into_iter().flatten());
            }
            Err(e) => reports.push(ReportRecord::failure("chains", None, &e)),
        }
    }
    let passed = reports.iter().all(|r| r.passed);
    RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        config: label.to_string(),
        passed,
        instance: Some(summarize(inst)),
        keldysh_profile,
        jordan_profile,
        chains: chain_table,
        spectrum,
        reports,
    }
}

/// Builds the instance of `config` and runs the pipeline. A failing build is
/// reported as a single failed `instance` entry.
pub fn run_experiment(
    config: &ExperimentConfig,
    label: &str,
    overrides: &ToleranceOverrides,
    only: Option<&str>,
) -> RunReport {
    match instance::build(config, overrides) {
        Ok(inst) => run_instance(label, &inst, only),
        Err(e) => RunReport {
            schema_version: REPORT_SCHEMA_VERSION,
            config: label.to_string(),
            passed: false,
            instance: None,
            keldysh_profile: Vec::new(),
            jordan_profile: Vec::new(),
            chains: Vec::new(),
            spectrum: Vec::new(),
            reports: vec![ReportRecord::failure("instance", None, &e)],
        },
    }
}
