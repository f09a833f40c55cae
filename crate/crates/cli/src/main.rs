//! `evoeq` command-line front end.
//!
//! Exit codes: 0 ok, 1 config, 2 certificate, 3 solve, 4 verification.

// Negated comparisons are deliberate: NaN must fail every range check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Ctx;
use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::Output;

const MIXED_TYPE_DEFAULT: &str = include_str!("../../../configs/mixed_type.toml");
const KELVIN_VOIGT_DEFAULT: &str = include_str!("../../../configs/kelvin_voigt.toml");
const DEFAULT_OUT: &str = "evoeq-out";

#[derive(Debug, Parser)]
#[command(name = "evoeq", version, about = "Certificates, causal solves and verification for evolutionary equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory; overrides `output.dir` of the config.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed of the randomized checks; overrides `seed` of the config (which defaults to 0).
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Also write plot data (pointwise norms, region map).
    #[arg(long, global = true)]
    emit_plot_data: bool,
    /// No report on stdout.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Positivity certificate of the material law.
    Check,
    /// Solve, with the configured perturbation if any.
    Solve,
    /// Run the verification suite.
    Verify,
    /// Sweep the weight over `weight.sweep`.
    SweepRho,
    /// Built-in example runs; `--config` replaces the default setup.
    Example {
        #[command(subcommand)]
        which: Example,
    },
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Example {
    MixedType,
    KelvinVoigt,
}

fn load(cli: &Cli) -> Result<RunConfig, CliError> {
    match (&cli.config, &cli.command) {
        (Some(p), _) => RunConfig::load(p),
        (None, Command::Example { which }) => {
            let text = match which {
                Example::MixedType => MIXED_TYPE_DEFAULT,
                Example::KelvinVoigt => KELVIN_VOIGT_DEFAULT,
            };
            RunConfig::parse(text, &PathBuf::from("."))
        }
        (None, _) => Err(CliError::Config("--config PATH is required".into())),
    }
}

fn run(cli: &Cli, cfg: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    let ctx = Ctx {
        cfg,
        seed: cli.seed.unwrap_or(cfg.seed),
        emit_plot_data: cli.emit_plot_data,
    };
    match &cli.command {
        Command::Check => commands::check(&ctx, out),
        Command::Solve => commands::solve_cmd(&ctx, out),
        Command::Verify => commands::verify(&ctx, out),
        Command::SweepRho => commands::sweep_rho(&ctx, out),
        Command::Example { which: Example::MixedType } => commands::example_mixed_type(&ctx, out),
        Command::Example { which: Example::KelvinVoigt } => commands::example_kelvin_voigt(&ctx, out),
    }
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    let dir = cli
        .out
        .clone()
        .or_else(|| cfg.output.dir.as_ref().map(|d| cfg.base_dir.join(d)))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let mut out = Output::new(dir, cli.quiet);
    let result = run(&cli, &cfg, &mut out);
    if let Err(e) = &result {
        out.key("status", "error");
        out.key("error_kind", e.kind());
        out.key("error", e);
    }
    out.key("exit_code", result.as_ref().err().map_or(0, CliError::exit_code));
    let written = out.finish();
    match (result, written) {
        (Err(e), _) | (Ok(()), Err(e)) => fail(&e),
        (Ok(()), Ok(())) => ExitCode::SUCCESS,
    }
}
