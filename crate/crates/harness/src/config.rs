//! Experiment configuration files (JSON, schema version 1).

use std::fs;
use std::path::Path;

use dtnkit_core::{Tolerances, C64};
use serde::{Deserialize, Serialize};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// A complex number written as `[re, im]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Complex(pub C64);

impl From<[f64; 2]> for Complex {
    fn from([re, im]: [f64; 2]) -> Self {
        Complex(C64::new(re, im))
    }
}

impl From<Complex> for [f64; 2] {
    fn from(c: Complex) -> Self {
        [c.0.re, c.0.im]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: Option<String>,
    pub domain: DomainSpec,
    pub coefficients: CoefficientSpec,
    pub boundary: BoundarySpec,
    pub lambda0: LambdaSpec,
    #[serde(default = "default_chain_order")]
    pub chain_order: usize,
    #[serde(default)]
    pub tolerances: ToleranceOverrides,
    #[serde(default)]
    pub seed: u64,
}

fn default_chain_order() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    Interval {
        n: usize,
        #[serde(default = "one")]
        length: f64,
    },
    Rectangle {
        nx: usize,
        ny: usize,
        #[serde(default = "one")]
        width: f64,
        #[serde(default = "one")]
        height: f64,
    },
}

fn one() -> f64 {
    1.0
}

/// Coefficients of one element (or of all elements when uniform).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElementCoefficients {
    /// `d × d` principal matrix, row-major.
    pub principal: Vec<Vec<Complex>>,
    #[serde(default)]
    pub b: Option<Vec<Complex>>,
    #[serde(default)]
    pub c: Option<Vec<Complex>>,
    #[serde(default)]
    pub c0: Option<Complex>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientSpec {
    Laplacian,
    SchroedingerComplex {
        c0: Complex,
    },
    Anisotropic {
        c_matrix: Vec<Vec<Complex>>,
    },
    /// Either `uniform` or one entry per element in `elements`.
    Explicit {
        #[serde(default)]
        uniform: Option<ElementCoefficients>,
        #[serde(default)]
        elements: Option<Vec<ElementCoefficients>>,
    },
    /// Seeded random uniform coefficients: principal part `I + p·R`, first
    /// order coefficients and potential scaled by `lower_order` and `c0_scale`.
    Random {
        #[serde(default = "default_perturbation")]
        perturbation: f64,
        #[serde(default = "default_lower_order")]
        lower_order: f64,
        #[serde(default = "one")]
        c0_scale: f64,
    },
}

fn default_perturbation() -> f64 {
    0.2
}

fn default_lower_order() -> f64 {
    0.3
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coordinates {
    Nodal,
    Dual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundarySpec {
    Zero,
    Explicit {
        #[serde(default = "nodal")]
        coordinates: Coordinates,
        matrix: Vec<Vec<Complex>>,
    },
    /// `B` with a chain of length at least two at `lambda0`.
    Defective {
        lambda0: Complex,
        seed: Vec<Complex>,
    },
    /// Seeded random nodal matrix with entries of modulus at most `scale`.
    Random {
        #[serde(default = "one")]
        scale: f64,
    },
}

fn nodal() -> Coordinates {
    Coordinates::Nodal
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaSpec {
    Value(Complex),
    NearestRobinEigenvalue {
        nearest_robin_eigenvalue: Complex,
    },
    NearestDirichletEigenvalue {
        nearest_dirichlet_eigenvalue: Complex,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceOverrides {
    pub consistency: Option<f64>,
    pub resolvent: Option<f64>,
    pub rank: Option<f64>,
    pub chain: Option<f64>,
    pub theorem: Option<f64>,
}

/// Relative rank threshold used by the runner unless overridden.
pub const DEFAULT_RANK_TOLERANCE: f64 = 1e-8;

impl ToleranceOverrides {
    /// Overrides applied on top of `self`.
    pub fn merged(&self, over: &ToleranceOverrides) -> ToleranceOverrides {
        ToleranceOverrides {
            consistency: over.consistency.or(self.consistency),
            resolvent: over.resolvent.or(self.resolvent),
            rank: over.rank.or(self.rank),
            chain: over.chain.or(self.chain),
            theorem: over.theorem.or(self.theorem),
        }
    }

    pub fn resolve(&self) -> Tolerances {
        let d = Tolerances::default();
        Tolerances {
            consistency: self.consistency.unwrap_or(d.consistency),
            resolvent: self.resolvent.unwrap_or(d.resolvent),
            rank: Some(self.rank.unwrap_or(DEFAULT_RANK_TOLERANCE)),
            chain: self.chain.unwrap_or(d.chain),
            theorem: self.theorem.unwrap_or(d.theorem),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: line {line}, column {column}: {message}")]
    Syntax {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: unsupported schema_version {found} (expected {CONFIG_SCHEMA_VERSION})")]
    Version { path: String, found: u32 },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

impl ExperimentConfig {
    pub fn from_str(text: &str, path: &str) -> Result<Self, ConfigError> {
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| ConfigError::Syntax {
                path: path.to_string(),
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            })?;
        if config.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(ConfigError::Version {
                path: path.to_string(),
                found: config.schema_version,
            });
        }
        config.validate().map_err(|message| ConfigError::Invalid {
            path: path.to_string(),
            message,
        })?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let display = path.display().to_string();
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: display.clone(),
            source,
        })?;
        Self::from_str(&text, &display)
    }

    pub fn dimension(&self) -> usize {
        match self.domain {
            DomainSpec::Interval { .. } => 1,
            DomainSpec::Rectangle { .. } => 2,
        }
    }

    /// Name used for output files: `name`, or the given fallback.
    pub fn label(&self, fallback: &str) -> String {
        self.name.clone().unwrap_or_else(|| fallback.to_string())
    }

    fn validate(&self) -> Result<(), String> {
        let d = self.dimension();
        let square = |m: &Vec<Vec<Complex>>, what: &str, size: usize| -> Result<(), String> {
            if m.len() != size || m.iter().any(|r| r.len() != size) {
                return Err(format!("{what} must be {size}×{size}"));
            }
            Ok(())
        };
        match &self.coefficients {
            CoefficientSpec::Anisotropic { c_matrix } => {
                square(c_matrix, "coefficients.c_matrix", d)?
            }
            CoefficientSpec::Explicit { uniform, elements } => match (uniform, elements) {
                (Some(u), None) => check_element(u, d, "coefficients.uniform")?,
                (None, Some(es)) => {
                    for (i, e) in es.iter().enumerate() {
                        check_element(e, d, &format!("coefficients.elements[{i}]"))?;
                    }
                }
                _ => {
                    return Err("coefficients: give exactly one of `uniform` and `elements`".into())
                }
            },
            CoefficientSpec::Random { perturbation, .. }
                if !(*perturbation >= 0.0 && *perturbation < 0.35) =>
            {
                return Err("coefficients.perturbation must lie in [0, 0.35)".into())
            }
            _ => {}
        }
        if let BoundarySpec::Explicit { matrix, .. } = &self.boundary {
            if matrix.iter().any(|r| r.len() != matrix.len()) {
                return Err("boundary.matrix must be square".into());
            }
        }
        if self.chain_order == 0 || self.chain_order > dtnkit_core::dtn::ORDER_CAP {
            return Err(format!(
                "chain_order must lie in 1..={}",
                dtnkit_core::dtn::ORDER_CAP
            ));
        }
        Ok(())
    }
}

fn check_element(e: &ElementCoefficients, d: usize, what: &str) -> Result<(), String> {
    if e.principal.len() != d || e.principal.iter().any(|r| r.len() != d) {
        return Err(format!("{what}.principal must be {d}×{d}"));
    }
    for (name, v) in [("b", &e.b), ("c", &e.c)] {
        if let Some(v) = v {
            if v.len() != d {
                return Err(format!("{what}.{name} must have {d} entries"));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const NEUMANN: &str = r#"{
        "schema_version": 1,
        "domain": {"kind": "interval", "n": 10},
        "coefficients": {"preset": "laplacian"},
        "boundary": {"kind": "zero"},
        "lambda0": [0.0, 0.0]
    }"#;

    #[test]
    fn minimal_config() {
        let c = ExperimentConfig::from_str(NEUMANN, "x.json").unwrap();
        assert_eq!(c.chain_order, 4);
        assert_eq!(c.lambda0, LambdaSpec::Value(Complex(C64::new(0.0, 0.0))));
        assert_eq!(c.tolerances.resolve().rank, Some(DEFAULT_RANK_TOLERANCE));
    }

    #[test]
    fn nearest_eigenvalue_form() {
        let text = NEUMANN.replace("[0.0, 0.0]", r#"{"nearest_robin_eigenvalue": [1.0, 0.5]}"#);
        let c = ExperimentConfig::from_str(&text, "x.json").unwrap();
        assert!(matches!(
            c.lambda0,
            LambdaSpec::NearestRobinEigenvalue { .. }
        ));
    }

    #[test]
    fn syntax_errors_carry_line() {
        let text = NEUMANN.replace("\"zero\"", "\"zer\"");
        match ExperimentConfig::from_str(&text, "x.json") {
            Err(ConfigError::Syntax { line, .. }) => assert_eq!(line, 5),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_version_rejected() {
        let text = NEUMANN.replace("\"schema_version\": 1", "\"schema_version\": 2");
        assert!(matches!(
            ExperimentConfig::from_str(&text, "x.json"),
            Err(ConfigError::Version { found: 2, .. })
        ));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let text = NEUMANN.replace(
            r#"{"preset": "laplacian"}"#,
            r#"{"preset": "anisotropic", "c_matrix": [[[1,0],[0,0]],[[0,0],[1,0]]]}"#,
        );
        assert!(matches!(
            ExperimentConfig::from_str(&text, "x.json"),
            Err(ConfigError::Invalid { .. })
        ));
    }

    #[test]
    fn overrides_merge() {
        let a = ToleranceOverrides {
            chain: Some(1e-6),
            ..Default::default()
        };
        let b = ToleranceOverrides {
            theorem: Some(1e-7),
            ..Default::default()
        };
        let m = a.merged(&b).resolve();
        assert_eq!((m.chain, m.theorem), (1e-6, 1e-7));
    }
}
