//! Config-driven experiments on top of `dtnkit-core`: JSON configs, the
//! verification pipeline, report bundles and `D(λ)` sweeps.

pub mod config;
pub mod instance;
pub mod pipeline;
pub mod report;
pub mod sweep;

pub use config::{ConfigError, ExperimentConfig, ToleranceOverrides};
pub use instance::{build, Instance, StageError};
pub use pipeline::{run_experiment, run_instance};
pub use report::{RunReport, REPORT_SCHEMA_VERSION};
