//! `maxplus-hjb`: runs solver experiments from a TOML configuration and
//! writes CSV/SVG artifacts plus a `manifest.json` into the output
//! directory.
//!
//! Exit codes: 0 pass, 1 invalid configuration, 2 solver or I/O failure,
//! 3 a check (property, tolerance, certificate) failed.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use maxplus_hjb::config::{ExperimentConfig, ProblemConfig};
use serde_json::json;
use thiserror::Error;

use crate::commands::Outcome;
use crate::output::{Manifest, OutputDir};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("i/o failure: {0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Solver(_) | CliError::Io(_) => 2,
        }
    }
}

const EXIT_CHECK_FAILED: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "maxplus-hjb", version, about = "Max-plus stochastic control experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML experiment configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Seed for every random stream (overrides `seed` and the optimizer seeds).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads.
    #[arg(long, global = true, env = "MAXPLUS_HJB_THREADS")]
    threads: Option<usize>,

    /// Check tolerance (overrides `tol`).
    #[arg(long, global = true)]
    tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
enum Command {
    /// Solve the QVI with the configured scheme.
    SolveQvi,
    /// Solve the equivalent PDE by finite differences.
    SolvePde,
    /// Evaluate a policy against the solved value function.
    EvalPolicy,
    /// Max-plus expectation of the running cost under a policy.
    MaxplusExpect,
    /// Risk-sensitive θ sweep towards the max-plus value.
    RiskLimit,
    /// Tabulate the closed-form Merton solutions.
    MertonOracle,
    /// Compare a grid solve of the capped Merton problem with its oracle.
    MertonCheck,
    /// Certify the quadratic H-infinity example and attack it.
    HinftyCertify,
    /// Solve for increasing horizons and check monotonicity.
    HinftySweep,
    /// Randomized Hamiltonian and semiring property suite.
    PropertySuite {
        /// Reverse the `K <= H` check; the suite must then fail.
        #[arg(long, hide = true)]
        inject_k_fault: bool,
    },
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::SolveQvi => "solve-qvi",
            Command::SolvePde => "solve-pde",
            Command::EvalPolicy => "eval-policy",
            Command::MaxplusExpect => "maxplus-expect",
            Command::RiskLimit => "risk-limit",
            Command::MertonOracle => "merton-oracle",
            Command::MertonCheck => "merton-check",
            Command::HinftyCertify => "hinfty-certify",
            Command::HinftySweep => "hinfty-sweep",
            Command::PropertySuite { .. } => "property-suite",
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
            ExperimentConfig::from_toml_str(&text).map_err(|e| CliError::Validation(e.to_string()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.policy.optimizer.seed = seed;
        cfg.hinfty.optimizer.seed = seed;
    }
    if let Some(tol) = cli.tol {
        cfg.tol = tol;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.display().to_string();
    }
    if let Command::PropertySuite { inject_k_fault: true } = cli.command {
        cfg.properties.inject_k_fault = true;
    }
    // the Merton and H-infinity commands fall back to their own family
    match cli.command {
        Command::MertonOracle | Command::MertonCheck if !matches!(cfg.problem, ProblemConfig::Merton(_)) => {
            cfg.problem = ProblemConfig::Merton(Default::default());
        }
        Command::HinftyCertify if !matches!(cfg.problem, ProblemConfig::HinftyQuadratic(_)) => {
            cfg.problem = ProblemConfig::HinftyQuadratic(Default::default());
        }
        _ => {}
    }
    cfg.validate().map_err(|e| CliError::Validation(e.to_string()))?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<u8, CliError> {
    let start = Instant::now();
    let cfg = load_config(cli)?;
    let steps_fixed = cfg.grid.steps.is_some();
    let mut resolved = cfg.resolved().map_err(|e| CliError::Validation(e.to_string()))?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Validation("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Solver(e.to_string()))?;
    }
    let mut out = OutputDir::create(resolved.output.dir.as_ref(), resolved.output.svg)?;

    let result = match cli.command {
        Command::SolveQvi => commands::solve_qvi(&resolved, steps_fixed, &mut out),
        Command::SolvePde => commands::solve_pde(&resolved, steps_fixed, &mut out),
        Command::EvalPolicy => commands::eval_policy(&resolved, &mut out),
        Command::MaxplusExpect => commands::maxplus_expect(&resolved, &mut out),
        Command::RiskLimit => commands::risk_limit(&resolved, steps_fixed, &mut out),
        Command::MertonOracle => commands::merton_oracle(&resolved, &mut out),
        Command::MertonCheck => commands::merton_check(&resolved, &mut out),
        Command::HinftyCertify => commands::hinfty_certify(&resolved, &mut out),
        Command::HinftySweep => commands::hinfty_sweep(&resolved, &mut out),
        Command::PropertySuite { .. } => commands::properties(&resolved, &mut out),
    };
    let (status, summary, code) = match &result {
        Ok(Outcome {
            passed: true, summary, ..
        }) => ("pass", summary.clone(), 0),
        Ok(Outcome {
            passed: false, summary, ..
        }) => ("fail", summary.clone(), EXIT_CHECK_FAILED),
        Err(e) => ("error", json!({ "error": e.to_string() }), e.exit_code()),
    };
    // the echo records the step count actually used, so it reruns as is
    if let Ok(Outcome { steps: Some(steps), .. }) = &result {
        resolved.grid.steps = Some(*steps);
    }
    out.write("config.toml", resolved.to_toml_string())?;
    let manifest = Manifest {
        tool: "maxplus-hjb",
        cli_version: env!("CARGO_PKG_VERSION"),
        library_version: maxplus_hjb::VERSION,
        subcommand: cli.command.name().into(),
        seed: resolved.seed,
        threads: rayon::current_num_threads(),
        status,
        summary,
        config: serde_json::to_value(&resolved).map_err(|e| CliError::Io(e.to_string()))?,
        timings: Vec::new(),
        artifacts: Vec::new(),
    };
    let root = out.root().to_path_buf();
    let manifest = out.finish(manifest, start.elapsed().as_secs_f64())?;
    result?;
    println!(
        "{}: {} ({} artifacts in {})",
        cli.command.name(),
        manifest.status.to_uppercase(),
        manifest.artifacts.len(),
        root.display()
    );
    Ok(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
