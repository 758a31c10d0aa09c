use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use strongcons_cli::demos::Demo;
use strongcons_cli::emit::{emit, Format};
use strongcons_cli::{parse_scenario, run, CliError, RunOptions};

#[derive(Parser)]
#[command(name = "strongcons", version, about = "Property checks for conditional risk measures on finite spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every check of a scenario and emit a report.
    Run {
        scenario: PathBuf,
        /// Write the report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        /// Replace every check's tolerance.
        #[arg(long)]
        override_tol: Option<f64>,
        /// Replace every check's trial count.
        #[arg(long)]
        override_trials: Option<usize>,
    },
    /// Parse a scenario and construct all of its objects without running checks.
    Validate { scenario: PathBuf },
    /// Print a bundled example scenario.
    Demo {
        #[arg(value_enum)]
        kind: Demo,
        /// Write the scenario here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn fail(e: CliError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { scenario, report, format, override_tol, override_trials } => {
            let loaded = match parse_scenario(&scenario) {
                Ok(l) => l,
                Err(e) => return fail(e),
            };
            let result = match run(&loaded, RunOptions { override_tol, override_trials }) {
                Ok(r) => r,
                Err(e) => return fail(e),
            };
            if let Err(e) = emit(&result, format, report.as_deref()) {
                return fail(e);
            }
            if report.is_some() {
                let s = &result.summary;
                eprintln!(
                    "{} checks: {} passed, {} failed, {} expected failures, {} unexpected passes",
                    s.checks, s.passed, s.failed, s.expected_failures, s.unexpected_passes
                );
            }
            ExitCode::from(result.exit_code() as u8)
        }
        Command::Validate { scenario } => {
            let loaded = match parse_scenario(&scenario) {
                Ok(l) => l,
                Err(e) => return fail(e),
            };
            match strongcons_cli::runner::validate(&loaded) {
                Ok(b) => {
                    println!(
                        "ok: {} algebras, {} utilities, {} families, {} crms, {} checks",
                        b.algebras.len(),
                        b.utilities.len(),
                        b.families.len(),
                        b.crms.len(),
                        loaded.scenario.checks.len()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::Demo { kind, out } => match out {
            Some(p) => match std::fs::write(&p, kind.source()) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(CliError::Io { path: p.display().to_string(), message: e.to_string() }),
            },
            None => {
                print!("{}", kind.source());
                ExitCode::SUCCESS
            }
        },
    }
}
