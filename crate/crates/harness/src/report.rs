//! Report bundle: `report.json`, `summary.txt`, `chains.csv` and
//! `spectrum.csv`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use dtnkit_core::{Tolerances, VerificationReport};
use serde::{Deserialize, Serialize};

use crate::config::Complex;
use crate::instance::StageError;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// `None` for values JSON cannot carry.
pub fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckRecord {
    pub name: String,
    /// `null` when the residual is not finite.
    pub residual: Option<f64>,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorRecord {
    pub stage: String,
    pub kind: String,
    pub message: String,
}

impl From<&StageError> for ErrorRecord {
    fn from(e: &StageError) -> Self {
        Self {
            stage: e.stage.to_string(),
            kind: e.kind.to_string(),
            message: e.source.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportRecord {
    pub name: String,
    /// The chain a per-chain report refers to, e.g. `keldysh_0`.
    pub subject: Option<String>,
    pub passed: bool,
    pub lambda0: Option<Complex>,
    pub checks: Vec<CheckRecord>,
    pub context: BTreeMap<String, Option<f64>>,
    pub error: Option<ErrorRecord>,
}

impl ReportRecord {
    pub fn from_report(report: &VerificationReport, subject: Option<String>) -> Self {
        Self {
            name: report.name.clone(),
            subject,
            passed: report.passed,
            lambda0: report.lambda0.map(Complex),
            checks: report
                .checks
                .iter()
                .map(|c| CheckRecord {
                    name: c.name.clone(),
                    residual: finite(c.residual),
                    tolerance: c.tolerance,
                    passed: c.passed(),
                })
                .collect(),
            context: report
                .context
                .iter()
                .map(|(k, v)| (k.clone(), finite(*v)))
                .collect(),
            error: None,
        }
    }

    pub fn failure(name: &str, subject: Option<String>, error: &StageError) -> Self {
        Self {
            name: name.to_string(),
            subject,
            passed: false,
            lambda0: None,
            checks: Vec::new(),
            context: BTreeMap::new(),
            error: Some(error.into()),
        }
    }

    /// Largest residual, `None` when there is none or one is not finite.
    pub fn max_residual(&self) -> Option<f64> {
        self.checks
            .iter()
            .try_fold(None, |acc: Option<f64>, c| {
                c.residual.map(|r| Some(acc.map_or(r, |a| a.max(r))))
            })
            .flatten()
    }

    /// Largest `residual / tolerance`, infinite for a non-finite residual.
    pub fn worst_ratio(&self) -> f64 {
        self.checks
            .iter()
            .map(|c| match c.residual {
                Some(r) if c.tolerance > 0.0 => r / c.tolerance,
                Some(r) if r <= c.tolerance => 0.0,
                _ => f64::INFINITY,
            })
            .fold(0.0, f64::max)
    }

    pub fn label(&self) -> String {
        match &self.subject {
            Some(s) => format!("{}[{}]", self.name, s),
            None => self.name.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceRecord {
    pub consistency: f64,
    pub resolvent: f64,
    pub rank: Option<f64>,
    pub chain: f64,
    pub theorem: f64,
}

impl From<&Tolerances> for ToleranceRecord {
    fn from(t: &Tolerances) -> Self {
        Self {
            consistency: t.consistency,
            resolvent: t.resolvent,
            rank: t.rank,
            chain: t.chain,
            theorem: t.theorem,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSummary {
    pub dimension: usize,
    pub num_dofs: usize,
    pub num_boundary: usize,
    pub h_max: f64,
    /// Ellipticity constant of the principal coefficients.
    pub mu: f64,
    /// Real symmetric coefficients, so that the form is Hermitian.
    pub hermitian_form: bool,
    /// Upper bound of the numerical range of `Re B` on `L₂(Γ)`.
    pub eta: f64,
    pub lambda0: Complex,
    pub distance_to_dirichlet_spectrum: f64,
    pub chain_order: usize,
    pub tolerances: ToleranceRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainRecord {
    /// `keldysh` for chains of `D(λ) - B`, `jordan` for chains of the Robin
    /// pencil.
    pub source: String,
    pub index: usize,
    pub length: usize,
    pub residuals: Vec<Option<f64>>,
    pub vector_norms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumEntry {
    /// `dirichlet` or `robin`.
    pub realization: String,
    pub index: usize,
    pub value: Complex,
    pub distance_to_lambda0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub schema_version: u32,
    pub config: String,
    pub passed: bool,
    pub instance: Option<InstanceSummary>,
    pub keldysh_profile: Vec<usize>,
    pub jordan_profile: Vec<usize>,
    pub chains: Vec<ChainRecord>,
    pub spectrum: Vec<SpectrumEntry>,
    pub reports: Vec<ReportRecord>,
}

impl RunReport {
    pub fn failed_reports(&self) -> impl Iterator<Item = &ReportRecord> {
        self.reports.iter().filter(|r| !r.passed)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Parses a report, rejecting schema versions other than
    /// [`REPORT_SCHEMA_VERSION`].
    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).context("report is not valid JSON")?;
        match value
            .get("schema_version")
            .and_then(serde_json::Value::as_u64)
        {
            Some(v) if v == u64::from(REPORT_SCHEMA_VERSION) => {}
            Some(v) => {
                bail!("unsupported report schema_version {v} (expected {REPORT_SCHEMA_VERSION})")
            }
            None => bail!("report has no schema_version"),
        }
        serde_json::from_value(value).context("report does not match schema version 1")
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "config: {}", self.config);
        if let Some(i) = &self.instance {
            let _ = writeln!(
                s,
                "instance: d={} dofs={} boundary={} h={:.4e} mu={:.4e} hermitian={} eta={:.4e}",
                i.dimension, i.num_dofs, i.num_boundary, i.h_max, i.mu, i.hermitian_form, i.eta
            );
            let _ = writeln!(
                s,
                "lambda0: {:.12e} {:+.12e}i (distance to Dirichlet spectrum {:.4e})",
                i.lambda0.0.re, i.lambda0.0.im, i.distance_to_dirichlet_spectrum
            );
        }
        let _ = writeln!(s, "keldysh chain lengths: {:?}", self.keldysh_profile);
        let _ = writeln!(s, "jordan chain lengths:  {:?}", self.jordan_profile);
        for r in &self.reports {
            let status = if r.passed { "PASS" } else { "FAIL" };
            let detail = match &r.error {
                Some(e) => format!("{} at {}: {}", e.kind, e.stage, e.message),
                None if r.checks.is_empty() => "no checks".to_string(),
                None => format!("worst residual/tolerance {:.3e}", r.worst_ratio()),
            };
            let _ = writeln!(s, "{status} {} {detail}", r.label());
            for c in r.checks.iter().filter(|c| !c.passed) {
                let residual = c
                    .residual
                    .map_or("non-finite".to_string(), |x| format!("{x:.3e}"));
                let _ = writeln!(
                    s,
                    "     {} residual {residual} > {:.1e}",
                    c.name, c.tolerance
                );
            }
        }
        let _ = writeln!(s, "overall: {}", if self.passed { "PASS" } else { "FAIL" });
        s
    }

    pub fn chains_csv(&self) -> anyhow::Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["source", "chain", "level", "residual", "vector_norm"])?;
        for c in &self.chains {
            for (level, (r, n)) in c.residuals.iter().zip(&c.vector_norms).enumerate() {
                w.write_record([
                    c.source.clone(),
                    c.index.to_string(),
                    level.to_string(),
                    r.map_or(String::new(), |x| x.to_string()),
                    n.to_string(),
                ])?;
            }
        }
        Ok(String::from_utf8(w.into_inner()?)?)
    }

    pub fn spectrum_csv(&self) -> anyhow::Result<String> {
        spectrum_csv(&self.spectrum)
    }

    /// Writes the bundle into `dir`, creating it if needed.
    pub fn write_bundle(&self, dir: &Path) -> anyhow::Result<()> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        let files = [
            ("report.json", self.to_json()),
            ("summary.txt", self.summary()),
            ("chains.csv", self.chains_csv()?),
            ("spectrum.csv", self.spectrum_csv()?),
        ];
        for (name, text) in files {
            let path = dir.join(name);
            fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
        }
        Ok(())
    }
}

pub fn spectrum_csv(entries: &[SpectrumEntry]) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["realization", "index", "re", "im", "distance_to_lambda0"])?;
    for e in entries {
        w.write_record([
            e.realization.clone(),
            e.index.to_string(),
            e.value.0.re.to_string(),
            e.value.0.im.to_string(),
            e.distance_to_lambda0.to_string(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn empty() -> RunReport {
        RunReport {
            schema_version: REPORT_SCHEMA_VERSION,
            config: "t".into(),
            passed: true,
            instance: None,
            keldysh_profile: vec![],
            jordan_profile: vec![],
            chains: vec![],
            spectrum: vec![],
            reports: vec![],
        }
    }

    #[test]
    fn json_round_trip() {
        let mut r = empty();
        let mut v = VerificationReport::new("x", None);
        v.check("a", f64::INFINITY, 1.0);
        r.reports
            .push(ReportRecord::from_report(&v, Some("c".into())));
        let back = RunReport::from_json(&r.to_json()).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.reports[0].checks[0].residual, None);
        assert!(!back.reports[0].passed);
    }

    #[test]
    fn loader_rejects_other_versions() {
        let text = empty()
            .to_json()
            .replace("\"schema_version\": 1", "\"schema_version\": 7");
        let err = RunReport::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("schema_version 7"));
        assert!(RunReport::from_json("{}").is_err());
    }

    #[test]
    fn max_residual_is_none_when_not_finite() {
        let mut v = VerificationReport::new("x", None);
        v.check("a", 1e-3, 1.0);
        v.check("b", 2e-3, 1.0);
        assert_eq!(
            ReportRecord::from_report(&v, None).max_residual(),
            Some(2e-3)
        );
        v.check("c", f64::NAN, 1.0);
        assert_eq!(ReportRecord::from_report(&v, None).max_residual(), None);
    }
}
