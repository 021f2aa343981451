use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use dtnkit::config::{ExperimentConfig, ToleranceOverrides};
use dtnkit::pipeline::{self, REPORT_NAMES};
use dtnkit::report::spectrum_csv;
use dtnkit::sweep::{self, Grid};

/// Environment variable holding the worker thread count.
const THREADS_VAR: &str = "DTNKIT_THREADS";

#[derive(Parser)]
#[command(
    name = "dtnkit",
    version,
    about = "Dirichlet-to-Neumann maps and Jordan chains of Robin realizations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every report and write the bundle.
    Run(Common),
    /// Tabulate D(λ) on a line of spectral parameters.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// START:STOP:COUNT[:IM]
        #[arg(long, allow_hyphen_values = true)]
        grid: Grid,
        /// Flag points closer than this to the Dirichlet spectrum (default: half the grid step).
        #[arg(long)]
        margin: Option<f64>,
    },
    /// Write the Dirichlet and Robin spectra.
    Spectrum(Common),
    /// Run a single report.
    Check {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(REPORT_NAMES))]
        only: String,
    },
}

#[derive(Args)]
struct Common {
    config: PathBuf,
    /// Output directory (default: out/<config name>).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    tol_consistency: Option<f64>,
    #[arg(long)]
    tol_resolvent: Option<f64>,
    #[arg(long)]
    tol_rank: Option<f64>,
    #[arg(long)]
    tol_chain: Option<f64>,
    #[arg(long)]
    tol_theorem: Option<f64>,
}

impl Common {
    fn overrides(&self) -> ToleranceOverrides {
        ToleranceOverrides {
            consistency: self.tol_consistency,
            resolvent: self.tol_resolvent,
            rank: self.tol_rank,
            chain: self.tol_chain,
            theorem: self.tol_theorem,
        }
    }

    fn load(&self) -> Result<(ExperimentConfig, String, PathBuf), Failure> {
        let config = ExperimentConfig::load(&self.config).map_err(|e| Failure::Config(e.into()))?;
        let stem = self.config.file_stem().map_or_else(
            || "experiment".to_string(),
            |s| s.to_string_lossy().into_owned(),
        );
        let label = config.label(&stem);
        let out = self
            .out
            .clone()
            .unwrap_or_else(|| Path::new("out").join(&label));
        Ok((config, label, out))
    }
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

enum Failure {
    Config(anyhow::Error),
    Checks,
    Io(anyhow::Error),
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = value.trim().parse().map_err(|_| {
        Failure::Config(anyhow::anyhow!(
            "{THREADS_VAR}={value} is not a thread count"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Io(e.into()))
}

fn run_reports(common: &Common, only: Option<&str>) -> Result<(), Failure> {
    let (config, label, out) = common.load()?;
    let report = pipeline::run_experiment(&config, &label, &common.overrides(), only);
    report.write_bundle(&out).map_err(Failure::Io)?;
    emit(&report.summary());
    emit(&format!("wrote {}\n", out.display()));
    if report.passed {
        Ok(())
    } else {
        Err(Failure::Checks)
    }
}

fn run_sweep(common: &Common, grid: &Grid, margin: Option<f64>) -> Result<(), Failure> {
    let (config, label, out) = common.load()?;
    let inst =
        dtnkit::build(&config, &common.overrides()).map_err(|e| Failure::Config(e.into()))?;
    let rows = sweep::sweep(&inst, grid, margin);
    let text = sweep::to_csv(&rows, inst.forms.num_boundary()).map_err(Failure::Io)?;
    std::fs::create_dir_all(&out)
        .and_then(|_| std::fs::write(out.join("sweep.csv"), text))
        .with_context(|| format!("cannot write {}", out.join("sweep.csv").display()))
        .map_err(Failure::Io)?;
    let flagged = rows.iter().filter(|r| r.flagged).count();
    emit(&format!(
        "{label}: {} points, {flagged} flagged, wrote {}\n",
        rows.len(),
        out.join("sweep.csv").display()
    ));
    Ok(())
}

fn run_spectrum(common: &Common) -> Result<(), Failure> {
    let (config, label, out) = common.load()?;
    let inst =
        dtnkit::build(&config, &common.overrides()).map_err(|e| Failure::Config(e.into()))?;
    let entries = pipeline::spectrum_entries(&inst).map_err(|e| Failure::Io(e.into()))?;
    let text = spectrum_csv(&entries).map_err(Failure::Io)?;
    std::fs::create_dir_all(&out)
        .and_then(|_| std::fs::write(out.join("spectrum.csv"), text))
        .with_context(|| format!("cannot write {}", out.join("spectrum.csv").display()))
        .map_err(Failure::Io)?;
    let mut text = format!("{label}: λ₀ = {}\n", inst.lambda0);
    for realization in ["dirichlet", "robin"] {
        let mut near: Vec<_> = entries
            .iter()
            .filter(|e| e.realization == realization)
            .collect();
        near.sort_by(|a, b| a.distance_to_lambda0.total_cmp(&b.distance_to_lambda0));
        for e in near.iter().take(5) {
            text += &format!(
                "{realization:>9} {:+.12e} {:+.12e}i\n",
                e.value.0.re, e.value.0.im
            );
        }
    }
    text += &format!("wrote {}\n", out.join("spectrum.csv").display());
    emit(&text);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|_| match &cli.command {
        Command::Run(common) => run_reports(common, None),
        Command::Check { common, only } => run_reports(common, Some(only)),
        Command::Sweep {
            common,
            grid,
            margin,
        } => run_sweep(common, grid, *margin),
        Command::Spectrum(common) => run_spectrum(common),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checks) => ExitCode::from(1),
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
