//! `modica`: runs solves and verification checks described by a config file.
//!
//! Exit status: 0 when every check passes, 1 when any check fails, 2 for
//! configuration, usage or IO errors.

mod checks;
mod config;
mod error;
mod problem;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::Document;
use crate::error::CliError;
use crate::problem::{Check, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "modica", version, about = "Gradient-bound verification for quasilinear elliptic problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every check listed in the config.
    Run(Common),
    /// Certify and sample the ellipticity constants only.
    CheckEllipticity(Common),
    /// Solve the configured problem only.
    Solve(Common),
    /// Run a chosen subset of checks.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Comma-separated checks: ellipticity, solve, bound, lemma,
        /// remainder, case, rigidity, counterexample.
        #[arg(long, value_delimiter = ',', required = true)]
        checks: Vec<String>,
    },
}

#[derive(Args)]
struct Common {
    config: PathBuf,
    /// Overrides `[run] seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `[run] out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Multiplies every check tolerance.
    #[arg(long)]
    tol_scale: Option<f64>,
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("MODICA_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("MODICA_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot configure thread pool: {e}")))
}

fn load(common: &Common, checks: Option<Vec<Check>>) -> Result<RunConfig, CliError> {
    if let Some(s) = common.tol_scale {
        if !(s > 0.0 && s.is_finite()) {
            return Err(CliError::Usage(format!("--tol-scale must be positive, got {s}")));
        }
    }
    let text = std::fs::read_to_string(&common.config).map_err(CliError::io(&common.config))?;
    let doc = Document::parse(&common.config, &text)?;
    let ov = Overrides {
        seed: common.seed,
        out: common.out.clone(),
        tol_scale: common.tol_scale,
        checks,
    };
    RunConfig::from_document(&doc, &ov)
}

fn execute(cli: Cli) -> Result<bool, CliError> {
    configure_threads()?;
    let cfg = match &cli.command {
        Command::Run(c) => load(c, None)?,
        Command::CheckEllipticity(c) => load(c, Some(vec![Check::Ellipticity]))?,
        Command::Solve(c) => load(c, Some(vec![Check::Solve]))?,
        Command::Verify { common, checks } => {
            let parsed = checks
                .iter()
                .map(|s| Check::parse(s.trim()).ok_or_else(|| CliError::Usage(format!("unknown check `{s}`"))))
                .collect::<Result<Vec<_>, _>>()?;
            load(common, Some(parsed))?
        }
    };
    let records = checks::run_checks(&cfg, |rec| {
        println!("{:<15} {}", rec.check, if rec.pass { "PASS" } else { "FAIL" });
    });
    let written = report::emit_report(&records, &cfg.out)?;
    println!("wrote {} files to {}", written.len(), display(&cfg.out));
    let failed: Vec<&str> = records.iter().filter(|r| !r.pass).map(|r| r.check.as_str()).collect();
    if !failed.is_empty() {
        eprintln!("failed checks: {}", failed.join(", "));
    }
    Ok(failed.is_empty())
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
