//! Report rendering.

use std::fmt::Write as _;
use std::path::Path;

use clap::ValueEnum;

use crate::error::CliError;
use crate::runner::Report;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
    Csv,
}

pub fn render(report: &Report, format: Format) -> Result<String, CliError> {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(report)
                .map_err(|e| CliError::Io { path: "report".into(), message: e.to_string() })?;
            s.push('\n');
            Ok(s)
        }
        Format::Text => Ok(render_text(report)),
        Format::Csv => render_csv(report),
    }
}

fn render_text(report: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "scenario sha256:{}", report.scenario_digest);
    let _ = writeln!(
        out,
        "{:>3}  {:<25} {:<28} {:<15} {:>7} {:>7} {:>8} {:>12} {:>9}",
        "#", "check", "subject", "outcome", "trials", "passes", "failures", "max_resid", "ms"
    );
    for c in &report.checks {
        let _ = writeln!(
            out,
            "{:>3}  {:<25} {:<28} {:<15} {:>7} {:>7} {:>8} {:>12.3e} {:>9.1}",
            c.index,
            c.name.as_str(),
            c.subject.join(","),
            c.outcome.as_str(),
            c.report.trials,
            c.report.passes,
            c.report.failure_count,
            c.report.max_residual,
            c.elapsed_ms
        );
        if let Some(f) = c.report.failures.first() {
            let what = f.error.as_deref().unwrap_or("property violated");
            let _ = writeln!(out, "     first failure: trial {} [{}] {}", f.trial, f.context, what);
        }
    }
    let s = &report.summary;
    let _ = writeln!(
        out,
        "summary: {} checks, {} passed, {} failed, {} expected failures, {} unexpected passes",
        s.checks, s.passed, s.failed, s.expected_failures, s.unexpected_passes
    );
    out
}

fn render_csv(report: &Report) -> Result<String, CliError> {
    let io = |e: csv::Error| CliError::Io { path: "report".into(), message: e.to_string() };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["name", "subject", "trials", "passes", "failures", "max_residual"]).map_err(io)?;
    for c in &report.checks {
        w.write_record([
            c.name.as_str().to_string(),
            c.subject.join(" "),
            c.report.trials.to_string(),
            c.report.passes.to_string(),
            c.report.failure_count.to_string(),
            format!("{:e}", c.report.max_residual),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io { path: "report".into(), message: e.to_string() })?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes to `path`, or to stdout when absent.
pub fn emit(report: &Report, format: Format, path: Option<&Path>) -> Result<(), CliError> {
    let text = render(report, format)?;
    match path {
        Some(p) => {
            std::fs::write(p, text).map_err(|e| CliError::Io { path: p.display().to_string(), message: e.to_string() })
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
