//! Executes a scenario's checks and assembles the report.

use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use strongcons::consistency::{
    check_aggregation_consistency, check_consistency_definitional, check_consistency_recursive,
    check_risk_antitonicity, classify_diagonal, default_grid, extract_decomposition, verify_decomposition,
};
use strongcons::crm::{
    check_cond_law_invariance, check_inverse, check_locality, check_normalization, check_strict_antitonicity,
};
use strongcons::families::{check_image_agreement, check_range_lemma};
use strongcons::{check_family_consistency, fit_intercons_link, CheckReport, Error, Failure};

use crate::build::{build, Built};
use crate::error::CliError;
use crate::scenario::{CheckKind, CheckSpec, Expect, Loaded, DEFAULT_TOL, DEFAULT_TRIALS, FORMAT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "FAIL")]
    Fail,
    #[serde(rename = "EXPECTED-FAIL")]
    ExpectedFail,
    #[serde(rename = "UNEXPECTED-PASS")]
    UnexpectedPass,
}

impl Outcome {
    fn new(passed: bool, expect: Expect) -> Self {
        match (passed, expect) {
            (true, Expect::Pass) => Self::Pass,
            (false, Expect::Pass) => Self::Fail,
            (false, Expect::Fail) => Self::ExpectedFail,
            (true, Expect::Fail) => Self::UnexpectedPass,
        }
    }

    pub fn met(self) -> bool {
        matches!(self, Self::Pass | Self::ExpectedFail)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Pass => "PASS",
            Self::Fail => "FAIL",
            Self::ExpectedFail => "EXPECTED-FAIL",
            Self::UnexpectedPass => "UNEXPECTED-PASS",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub index: usize,
    pub name: CheckKind,
    pub subject: Vec<String>,
    pub trials: usize,
    pub seed: u64,
    pub tol: f64,
    pub expect: Expect,
    pub outcome: Outcome,
    pub elapsed_ms: f64,
    pub report: CheckReport,
    /// Estimates produced by `classify` and `intercons_link`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub checks: usize,
    pub passed: usize,
    pub failed: usize,
    pub expected_failures: usize,
    pub unexpected_passes: usize,
    pub expectations_met: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format_version: u32,
    pub scenario_digest: String,
    pub checks: Vec<CheckRecord>,
    pub summary: Summary,
}

impl Report {
    pub fn exit_code(&self) -> i32 {
        if self.summary.expectations_met {
            0
        } else {
            1
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub override_tol: Option<f64>,
    pub override_trials: Option<usize>,
}

/// Errors that mean the check was set up wrongly rather than failed.
fn is_precondition(e: &Error) -> bool {
    matches!(
        e,
        Error::SpaceMismatch
            | Error::DimMismatch { .. }
            | Error::AlgebraMismatch(_)
            | Error::NotMeasurable(_)
            | Error::Unsupported(_)
            | Error::InvalidPartition(_)
    )
}

/// Turns a check-level error into either an abort or a single failed trial.
fn settle(name: &str, res: Result<CheckReport, Error>, path: &str) -> Result<CheckReport, CliError> {
    match res {
        Ok(r) => Ok(r),
        Err(e) if is_precondition(&e) => Err(CliError::invalid(path, e)),
        Err(e) => {
            let mut r = CheckReport::new(name);
            r.fail(f64::INFINITY, Failure::from_error(0, name, &e));
            Ok(r)
        }
    }
}

fn arity(spec: &CheckSpec, path: &str, n: usize) -> Result<Vec<String>, CliError> {
    let names = spec.subject.names();
    if names.len() != n {
        return Err(CliError::invalid(
            format!("{path}.subject"),
            format!("{} expects {n} subject name(s), got {}", spec.name.as_str(), names.len()),
        ));
    }
    Ok(names)
}

fn run_check(
    spec: &CheckSpec,
    built: &Built,
    trials: usize,
    tol: f64,
    path: &str,
) -> Result<(CheckReport, Option<Value>), CliError> {
    let subj = format!("{path}.subject");
    let seed = spec.seed;
    let name = spec.name.as_str();
    let one_crm = || -> Result<_, CliError> {
        let n = arity(spec, path, 1)?;
        built.crm(&n[0], &subj)
    };
    let two_crms = || -> Result<_, CliError> {
        let n = arity(spec, path, 2)?;
        Ok((built.crm(&n[0], &format!("{subj}[0]"))?, built.crm(&n[1], &format!("{subj}[1]"))?))
    };
    let one_family = || -> Result<_, CliError> {
        let n = arity(spec, path, 1)?;
        built.family(&n[0], &subj)
    };
    let report = match spec.name {
        CheckKind::StrictAntitonicity => check_strict_antitonicity(one_crm()?, trials, seed),
        CheckKind::Locality => check_locality(one_crm()?, trials, seed),
        CheckKind::CondLawInvariance => check_cond_law_invariance(one_crm()?, trials, seed),
        CheckKind::Normalization => check_normalization(one_crm()?, trials, seed, tol),
        CheckKind::Inverse => check_inverse(one_crm()?, trials, seed, tol),
        CheckKind::RiskAntitonicity => check_risk_antitonicity(one_crm()?, trials, seed, tol),
        CheckKind::ConsistencyRecursive => {
            let (g, h) = two_crms()?;
            settle(name, check_consistency_recursive(g, h, trials, seed, tol), path)?
        }
        CheckKind::ConsistencyDefinitional => {
            let (g, h) = two_crms()?;
            settle(name, check_consistency_definitional(g, h, trials, seed, tol), path)?
        }
        CheckKind::Decomposition => {
            let rho = one_crm()?;
            let res = extract_decomposition(rho).map(|dec| verify_decomposition(rho, &dec, trials, seed, tol));
            settle(name, res, path)?
        }
        CheckKind::AggregationConsistency => {
            let (g, f) = two_crms()?;
            let res = extract_decomposition(g).and_then(|dg| {
                let df = extract_decomposition(f)?;
                check_aggregation_consistency(&dg, &df, trials, seed, tol)
            });
            settle(name, res, path)?
        }
        CheckKind::Classify => {
            let rho = one_crm()?;
            let mut report = CheckReport::new(name);
            match classify_diagonal(rho, &default_grid(), tol) {
                Ok(c) => {
                    let class = format!("{:?}", c.class).to_lowercase();
                    let mut residual = c.linear_residual.min(c.entropic_residual);
                    let mut ok = true;
                    if let Some(want) = &spec.params.class {
                        ok &= want.eq_ignore_ascii_case(&class);
                    }
                    if let Some(beta) = spec.params.beta {
                        let gap = c.beta_hat.map_or(f64::INFINITY, |b| (b - beta).abs());
                        residual = residual.max(gap);
                        ok &= gap <= tol;
                    }
                    report.record(ok, residual, || {
                        Failure::new(0, format!("classified as {class}"))
                            .observed(&c.beta_hat.into_iter().collect::<Vec<_>>())
                            .expected(&spec.params.beta.into_iter().collect::<Vec<_>>())
                    });
                    let detail = json!({
                        "class": class,
                        "beta_hat": c.beta_hat,
                        "linear_residual": c.linear_residual,
                        "entropic_residual": c.entropic_residual,
                        "cash_additive": c.cash_additive,
                        "convex": c.convex,
                    });
                    return Ok((report, Some(detail)));
                }
                Err(e) => settle(name, Err(e), path)?,
            }
        }
        CheckKind::FamilyConsistency => check_family_consistency(one_family()?, trials, seed, tol),
        CheckKind::ImageAgreement => check_image_agreement(one_family()?, trials, seed),
        CheckKind::InterconsLink => {
            let n = arity(spec, path, 3)?;
            let fam = built.family(&n[0], &format!("{subj}[0]"))?;
            let t1 = built.algebra(&n[1], &format!("{subj}[1]"))?;
            let t2 = built.algebra(&n[2], &format!("{subj}[2]"))?;
            match fit_intercons_link(fam, t1, t2, trials, seed, tol) {
                Ok(link) => {
                    let mut report = CheckReport::new(name);
                    let mut residual = link.residual.max(link.martingale_residual);
                    let mut ok = true;
                    if let Some(a) = spec.params.a {
                        residual = residual.max((link.a - a).abs());
                        ok &= (link.a - a).abs() <= tol;
                    }
                    if let Some(b) = spec.params.b {
                        for off in &link.b {
                            let gap = off.b.values().iter().map(|v| (v - b).abs()).fold(0.0, f64::max);
                            residual = residual.max(gap);
                            ok &= gap <= tol;
                        }
                    }
                    report.record(ok, residual, || Failure::new(0, "link").observed(&[link.a]));
                    let offsets: serde_json::Map<String, Value> =
                        link.b.iter().map(|o| (o.h_name.clone(), json!(o.b.values()))).collect();
                    let detail = json!({
                        "a": link.a,
                        "b": offsets,
                        "residual": link.residual,
                        "martingale_residual": link.martingale_residual,
                    });
                    return Ok((report, Some(detail)));
                }
                Err(e) => settle(name, Err(e), path)?,
            }
        }
        CheckKind::RangeLemma => {
            let n = arity(spec, path, 3)?;
            let u = built.utility(&n[0], &format!("{subj}[0]"))?;
            let h = built.algebra(&n[1], &format!("{subj}[1]"))?;
            let g = built.algebra(&n[2], &format!("{subj}[2]"))?;
            settle(name, check_range_lemma(u, h, g, trials, seed), path)?
        }
    };
    Ok((report, None))
}

/// Resolves every check's subject names and settings without running it.
fn validate_check(spec: &CheckSpec, built: &Built, path: &str) -> Result<(), CliError> {
    let subj = format!("{path}.subject");
    let at = |i: usize, n: usize| if n == 1 { subj.clone() } else { format!("{subj}[{i}]") };
    match spec.name {
        CheckKind::ConsistencyRecursive | CheckKind::ConsistencyDefinitional | CheckKind::AggregationConsistency => {
            for (i, n) in arity(spec, path, 2)?.iter().enumerate() {
                built.crm(n, &at(i, 2))?;
            }
        }
        CheckKind::FamilyConsistency | CheckKind::ImageAgreement => {
            built.family(&arity(spec, path, 1)?[0], &subj)?;
        }
        CheckKind::InterconsLink => {
            let n = arity(spec, path, 3)?;
            built.family(&n[0], &at(0, 3))?;
            built.algebra(&n[1], &at(1, 3))?;
            built.algebra(&n[2], &at(2, 3))?;
        }
        CheckKind::RangeLemma => {
            let n = arity(spec, path, 3)?;
            built.utility(&n[0], &at(0, 3))?;
            built.algebra(&n[1], &at(1, 3))?;
            built.algebra(&n[2], &at(2, 3))?;
        }
        _ => {
            built.crm(&arity(spec, path, 1)?[0], &subj)?;
        }
    }
    if spec.trials == Some(0) {
        return Err(CliError::invalid(format!("{path}.trials"), "at least one trial is required"));
    }
    if let Some(tol) = spec.tol {
        if tol.is_nan() || tol < 0.0 {
            return Err(CliError::invalid(format!("{path}.tol"), "tolerance must be non-negative"));
        }
    }
    if let Some(class) = &spec.params.class {
        if !["linear", "entropic", "neither"].contains(&class.to_ascii_lowercase().as_str()) {
            return Err(CliError::invalid(format!("{path}.params.class"), format!("unknown class \"{class}\"")));
        }
    }
    Ok(())
}

/// Builds every declared object and resolves every check.
pub fn validate(loaded: &Loaded) -> Result<Built, CliError> {
    let built = build(&loaded.scenario)?;
    for (index, spec) in loaded.scenario.checks.iter().enumerate() {
        validate_check(spec, &built, &format!("checks[{index}]"))?;
    }
    Ok(built)
}

/// Builds the scenario and runs every check in declaration order.
pub fn run(loaded: &Loaded, opts: RunOptions) -> Result<Report, CliError> {
    let built = validate(loaded)?;
    let mut checks = Vec::with_capacity(loaded.scenario.checks.len());
    for (index, spec) in loaded.scenario.checks.iter().enumerate() {
        let path = format!("checks[{index}]");
        let trials = opts.override_trials.or(spec.trials).unwrap_or(DEFAULT_TRIALS);
        let tol = opts.override_tol.or(spec.tol).unwrap_or(DEFAULT_TOL);
        if trials == 0 || tol.is_nan() || tol < 0.0 {
            return Err(CliError::invalid(path, "overrides need at least one trial and a non-negative tolerance"));
        }
        let start = Instant::now();
        let (report, detail) = run_check(spec, &built, trials, tol, &path)?;
        let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
        checks.push(CheckRecord {
            index,
            name: spec.name,
            subject: spec.subject.names(),
            trials,
            seed: spec.seed,
            tol,
            expect: spec.expect,
            outcome: Outcome::new(report.passed(), spec.expect),
            elapsed_ms,
            report,
            detail,
        });
    }
    let count = |o: Outcome| checks.iter().filter(|c| c.outcome == o).count();
    let summary = Summary {
        checks: checks.len(),
        passed: count(Outcome::Pass),
        failed: count(Outcome::Fail),
        expected_failures: count(Outcome::ExpectedFail),
        unexpected_passes: count(Outcome::UnexpectedPass),
        expectations_met: checks.iter().all(|c| c.outcome.met()),
    };
    Ok(Report { format_version: FORMAT_VERSION, scenario_digest: loaded.digest.clone(), checks, summary })
}

/// Drops every `elapsed_ms` field so reports can be compared across runs.
pub fn strip_timing(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.remove("elapsed_ms");
            map.values_mut().for_each(strip_timing);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_timing),
        _ => {}
    }
}
