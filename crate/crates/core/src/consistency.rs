//! Strong consistency of CRM pairs, the aggregation/univariate decomposition,
//! affine uniqueness of stochastic utilities and the diagonal classifier.

use std::cell::RefCell;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::crm::{Crm, INNER_TOL};
use crate::error::{Error, Result};
use crate::probspace::{cond_expectation, is_independent, same_space, RandomVariable, RandomVector, SigmaAlgebra, EPS};
use crate::report::{CheckReport, Failure};
use crate::roots::invert_increasing;
use crate::sampling::{measurable_variable, measurable_vector, nonneg_perturbation, random_event, trial_rng};
use crate::utility::StochasticUtility;

/// Members of one consistency instance: `ρ_{G,T₁}`, `ρ_{H,T₁}`, `ρ_{H,T₂}`,
/// `ρ_{G,T₂}`. A plain pair `(ρ_G, ρ_H)` is the case `T₁ = T₂`.
#[derive(Debug, Clone, Copy)]
pub struct Quad<'a> {
    pub g1: &'a Crm,
    pub h1: &'a Crm,
    pub h2: &'a Crm,
    pub g2: &'a Crm,
}

impl<'a> Quad<'a> {
    pub fn pair(rho_g: &'a Crm, rho_h: &'a Crm) -> Self {
        Self { g1: rho_g, h1: rho_h, h2: rho_h, g2: rho_g }
    }
}

fn check_pair(rho_g: &Crm, rho_h: &Crm) -> Result<()> {
    if !same_space(rho_g.space(), rho_h.space()) {
        return Err(Error::SpaceMismatch);
    }
    if rho_g.domain() != rho_h.domain() {
        return Err(Error::AlgebraMismatch("the two measures have different domains".into()));
    }
    if rho_g.dim() != rho_h.dim() {
        return Err(Error::DimMismatch { expected: rho_g.dim(), got: rho_h.dim() });
    }
    if !rho_h.target().refines(rho_g.target())? {
        return Err(Error::AlgebraMismatch("coarse target is not contained in the fine target".into()));
    }
    Ok(())
}

/// `f⁻¹_{ρ_{H,T₂}}(ρ_{H,T₁}(X))`.
fn cash_equivalent(q: &Quad, x: &RandomVector) -> Result<RandomVariable> {
    q.h2.f_rho_inverse(&q.h1.eval(x)?, INNER_TOL)
}

/// Recursion identity `ρ_{G,T₁}(X) = ρ_{G,T₂}(f⁻¹_{ρ_{H,T₂}}(ρ_{H,T₁}(X))·𝟙_d)`.
pub fn recursion_trials(q: &Quad, trials: usize, rng_seed: u64, tol: f64, context: &str) -> CheckReport {
    let mut report = CheckReport::new("consistency_recursive");
    let d = q.g1.dim();
    for k in 0..trials {
        let mut rng = trial_rng(rng_seed, k);
        let x = measurable_vector(&mut rng, q.g1.domain(), d, -2.0, 2.0);
        let outcome = (|| {
            let lhs = q.g1.eval(&x)?;
            let rhs = q.g2.eval(&cash_equivalent(q, &x)?.diagonal(d))?;
            Ok::<_, Error>((lhs, rhs))
        })();
        match outcome {
            Ok((lhs, rhs)) => {
                let r = lhs.max_abs_diff(&rhs);
                report.record(r <= tol, r, || {
                    Failure::new(k, context).with("X", x.values()).observed(lhs.values()).expected(rhs.values())
                });
            }
            Err(e) => report.fail(f64::INFINITY, Failure::from_error(k, context, &e)),
        }
    }
    report
}

/// `a ≥ b − tol` everywhere; returns the largest violation.
fn shortfall(a: &RandomVariable, b: &RandomVariable) -> f64 {
    b.values().iter().zip(a.values()).map(|(y, x)| (y - x).max(0.0)).fold(0.0, f64::max)
}

fn dominates(a: &RandomVariable, b: &RandomVariable, tol: f64) -> bool {
    shortfall(a, b) <= tol
}

/// Implication `ρ_{H,T₁}(X) ≥ ρ_{H,T₂}(Y) ⟹ ρ_{G,T₁}(X) ≥ ρ_{G,T₂}(Y)` and
/// its mirror, on constructed and rejection-sampled pairs.
pub fn definitional_trials(q: &Quad, trials: usize, rng_seed: u64, tol: f64, context: &str) -> CheckReport {
    let mut report = CheckReport::new("consistency_definitional");
    let d = q.g1.dim();
    for k in 0..trials {
        let mut rng = trial_rng(rng_seed, k);
        let x = measurable_vector(&mut rng, q.g1.domain(), d, -2.0, 2.0);
        let zero_gap = rng.gen_bool(0.25);
        let gap = nonneg_perturbation(&mut rng, q.g2.domain(), d, if zero_gap { 1.0 } else { 0.5 }, false);
        let free = measurable_vector(&mut rng, q.g2.domain(), d, -2.0, 2.0);
        let outcome = (|| {
            let hx = q.h1.eval(&x)?;
            let gx = q.g1.eval(&x)?;
            let cash = q.h2.f_rho_inverse(&hx, INNER_TOL)?.diagonal(d);
            let mut worst = (0.0_f64, None::<(&'static str, RandomVector, RandomVariable)>);
            let mut consider = |label: &'static str, y: RandomVector, h_le: bool, h_ge: bool| -> Result<()> {
                let gy = q.g2.eval(&y)?;
                if h_le {
                    // ρ_H(X) ≥ ρ_H(Y) must give ρ_G(X) ≥ ρ_G(Y)
                    let v = shortfall(&gx, &gy);
                    if v > worst.0 {
                        worst = (v, Some((label, y.clone(), gy.clone())));
                    }
                }
                if h_ge {
                    let v = shortfall(&gy, &gx);
                    if v > worst.0 {
                        worst = (v, Some((label, y, gy)));
                    }
                }
                Ok(())
            };
            let up = cash.zip_with(&gap, |c, g| c + g)?;
            let hy = q.h2.eval(&up)?;
            consider("upper", up, dominates(&hx, &hy, tol), false)?;
            let down = cash.zip_with(&gap, |c, g| c - g)?;
            let hy = q.h2.eval(&down)?;
            consider("lower", down, false, dominates(&hy, &hx, tol))?;
            let hy = q.h2.eval(&free)?;
            let (le, ge) = (dominates(&hx, &hy, 0.0), dominates(&hy, &hx, 0.0));
            if le || ge {
                consider("sampled", free.clone(), le, ge)?;
            }
            Ok::<_, Error>((gx, worst))
        })();
        match outcome {
            Ok((gx, (v, witness))) => match witness {
                Some((label, y, gy)) if v > tol => report.fail(
                    v,
                    Failure::new(k, format!("{context}:{label}"))
                        .with("X", x.values())
                        .with("Y", y.values())
                        .observed(gy.values())
                        .expected(gx.values()),
                ),
                _ => report.pass(v),
            },
            Err(e) => report.fail(f64::INFINITY, Failure::from_error(k, context, &e)),
        }
    }
    report
}

/// Recursion form of strong consistency for `G ⊆ H`.
pub fn check_consistency_recursive(
    rho_g: &Crm,
    rho_h: &Crm,
    trials: usize,
    rng_seed: u64,
    tol: f64,
) -> Result<CheckReport> {
    check_pair(rho_g, rho_h)?;
    Ok(recursion_trials(&Quad::pair(rho_g, rho_h), trials, rng_seed, tol, "recursion"))
}

/// Definitional form `ρ_H(X) ≤ ρ_H(Y) ⟹ ρ_G(X) ≤ ρ_G(Y)`.
pub fn check_consistency_definitional(
    rho_g: &Crm,
    rho_h: &Crm,
    trials: usize,
    rng_seed: u64,
    tol: f64,
) -> Result<CheckReport> {
    check_pair(rho_g, rho_h)?;
    Ok(definitional_trials(&Quad::pair(rho_g, rho_h), trials, rng_seed, tol, "definition"))
}

/// `ρ = η∘Λ` with `Λ(X)(ω) = −ρ̃(X(ω), ω)` and `η(F) = ρ(f_Λ⁻¹(F)·𝟙_d)`.
#[derive(Debug, Clone)]
pub struct Decomposition {
    rho: Crm,
    flipped_state: Option<usize>,
    /// Outcome of a short risk-antitonicity screen run at extraction.
    pub risk_antitone: bool,
}

impl Decomposition {
    pub fn rho(&self) -> &Crm {
        &self.rho
    }

    /// The same decomposition with `Λ` negated at one state, for negative tests.
    pub fn corrupted(mut self, state: usize) -> Self {
        self.flipped_state = Some(state);
        self
    }

    /// `Λ` at one state for a deterministic row `x`.
    pub fn lambda_at(&self, x: &[f64], state: usize) -> Result<f64> {
        let v = -self.rho.realization(x, state)?;
        Ok(if self.flipped_state == Some(state) { -v } else { v })
    }

    pub fn lambda(&self, x: &RandomVector) -> Result<RandomVariable> {
        if !same_space(self.rho.space(), x.space()) {
            return Err(Error::SpaceMismatch);
        }
        if x.dim() != self.rho.dim() {
            return Err(Error::DimMismatch { expected: self.rho.dim(), got: x.dim() });
        }
        let values = (0..x.space().len()).map(|s| self.lambda_at(x.row(s), s)).collect::<Result<Vec<_>>>()?;
        RandomVariable::new(x.space(), values)
    }

    /// `f_Λ(α) = Λ(α·𝟙_d)`.
    pub fn f_lambda(&self, alpha: &RandomVariable) -> Result<RandomVariable> {
        self.lambda(&alpha.diagonal(self.rho.dim()))
    }

    /// State-wise inverse of the increasing diagonal `f_Λ`.
    pub fn f_lambda_inverse(&self, f: &RandomVariable, tol: f64) -> Result<RandomVariable> {
        let d = self.rho.dim();
        let mut out = Vec::with_capacity(f.values().len());
        for (s, &y) in f.values().iter().enumerate() {
            let failure = RefCell::new(None);
            let t = invert_increasing(
                |t| match self.lambda_at(&vec![t; d], s) {
                    Ok(v) => v,
                    Err(e) => {
                        failure.borrow_mut().get_or_insert(e);
                        f64::NAN
                    }
                },
                y,
                tol,
            );
            if let Some(e) = failure.into_inner() {
                return Err(e);
            }
            out.push(t?);
        }
        RandomVariable::new(f.space(), out)
    }

    /// `η(F) = ρ(f_Λ⁻¹(F)·𝟙_d)`.
    pub fn eta(&self, f: &RandomVariable) -> Result<RandomVariable> {
        self.rho.eval(&self.f_lambda_inverse(f, INNER_TOL)?.diagonal(self.rho.dim()))
    }

    /// `−Λ` as a CRM with target equal to the domain.
    pub fn neg_lambda_crm(&self) -> Crm {
        self.rho.negated_aggregation()
    }
}

/// Builds the decomposition of `rho`. Fails with `OutOfRange` when the
/// aggregation diagonal cannot reach zero.
pub fn extract_decomposition(rho: &Crm) -> Result<Decomposition> {
    let mut dec = Decomposition { rho: rho.clone(), flipped_state: None, risk_antitone: true };
    dec.f_lambda_inverse(&RandomVariable::constant(rho.space(), 0.0), INNER_TOL)?;
    dec.risk_antitone = check_risk_antitonicity(rho, 20, 0, 1e-8).passed();
    Ok(dec)
}

/// State-wise dominance of the realization must carry over to `ρ`.
pub fn check_risk_antitonicity(rho: &Crm, trials: usize, rng_seed: u64, tol: f64) -> CheckReport {
    let mut report = CheckReport::new("risk_antitonicity");
    let domain = rho.domain();
    let d = rho.dim();
    for k in 0..trials {
        let mut rng = trial_rng(rng_seed, k);
        let x = measurable_vector(&mut rng, domain, d, -2.0, 2.0);
        let z = measurable_vector(&mut rng, domain, d, -2.0, 2.0);
        let all_zero = rng.gen_bool(0.3);
        let drops: Vec<f64> = (0..domain.num_blocks())
            .map(|_| if all_zero || rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(0.0..0.5) })
            .collect();
        let outcome = (|| {
            // shift z block by block until ρ̃(Y) = ρ̃(X) − drop
            let mut shift = vec![0.0; x.space().len()];
            for (b, block) in domain.blocks().iter().enumerate() {
                let rep = block[0];
                let level = rho.realization(x.row(rep), rep)? - drops[b];
                let s = rho.solve_shift(z.row(rep), rep, level, INNER_TOL)?;
                for &st in block {
                    shift[st] = s;
                }
            }
            let y = z.shift(&RandomVariable::new(x.space(), shift)?)?;
            for s in 0..x.space().len() {
                if rho.realization(y.row(s), s)? > rho.realization(x.row(s), s)? + EPS.max(tol * 1e-3) {
                    return Ok(None);
                }
            }
            Ok::<_, Error>(Some((y.clone(), rho.eval(&x)?, rho.eval(&y)?)))
        })();
        match outcome {
            Ok(None) => report.skip(),
            Ok(Some((y, rx, ry))) => {
                let r = if drops.iter().all(|&v| v == 0.0) { rx.max_abs_diff(&ry) } else { shortfall(&rx, &ry) };
                report.record(r <= tol, r, || {
                    Failure::new(k, "risk_antitonicity")
                        .with("X", x.values())
                        .with("Y", y.values())
                        .observed(rx.values())
                        .expected(ry.values())
                });
            }
            Err(e) => report.fail(f64::INFINITY, Failure::from_error(k, "construction", &e)),
        }
    }
    report
}

/// Reconstruction, normalization on target-measurable inputs, and strict
/// isotonicity and locality of `Λ`.
pub fn verify_decomposition(rho: &Crm, dec: &Decomposition, trials: usize, rng_seed: u64, tol: f64) -> CheckReport {
    let mut report = CheckReport::new("decomposition");
    let d = rho.dim();
    for k in 0..trials {
        let mut rng = trial_rng(rng_seed, k);
        let x = measurable_vector(&mut rng, rho.domain(), d, -2.0, 2.0);
        let xg = measurable_vector(&mut rng, rho.target(), d, -2.0, 2.0);
        let gap = nonneg_perturbation(&mut rng, rho.domain(), d, 0.5, true);
        let other = measurable_vector(&mut rng, rho.domain(), d, -2.0, 2.0);
        let event = random_event(&mut rng, rho.domain());
        let outcome = (|| {
            let mut worst: (f64, &'static str, Vec<f64>, Vec<f64>) = (0.0, "", vec![], vec![]);
            let mut note = |r: f64, label: &'static str, obs: &RandomVariable, exp: &RandomVariable| {
                if r > worst.0 {
                    worst = (r, label, obs.values().to_vec(), exp.values().to_vec());
                }
            };

            let lx = dec.lambda(&x)?;
            let rebuilt = dec.eta(&lx)?;
            let direct = rho.eval(&x)?;
            note(rebuilt.max_abs_diff(&direct), "reconstruction", &rebuilt, &direct);

            let lg = dec.lambda(&xg)?;
            let on_g = dec.eta(&lg)?;
            let neg = lg.map(|v| -v);
            note(on_g.max_abs_diff(&neg), "constants", &on_g, &neg);

            let upper = x.zip_with(&gap, |a, b| a + b)?;
            let lu = dec.lambda(&upper)?;
            let mut iso = 0.0_f64;
            for s in 0..x.space().len() {
                let diff = lu.get(s) - lx.get(s);
                let moved = gap.row(s).iter().any(|&g| g > 0.0);
                if moved && diff <= EPS {
                    iso = f64::INFINITY;
                } else if diff < 0.0 {
                    iso = iso.max(-diff);
                }
            }
            note(iso, "isotonicity", &lu, &lx);

            let spliced = dec.lambda(&x.splice(&other, &event)?)?;
            let parts = lx.splice(&dec.lambda(&other)?, &event)?;
            note(spliced.max_abs_diff(&parts), "locality", &spliced, &parts);
            Ok::<_, Error>(worst)
        })();
        match outcome {
            Ok((r, label, obs, exp)) => report
                .record(r <= tol, r, || Failure::new(k, label).with("X", x.values()).observed(&obs).expected(&exp)),
            Err(e) => report.fail(f64::INFINITY, Failure::from_error(k, "decomposition", &e)),
        }
    }
    report
}

/// Consistency of two aggregations on the same domain, in the identity form
/// `f_{Λ_G}⁻¹(Λ_G(X)) = f_{Λ_F}⁻¹(Λ_F(X))` plus the ordered-pair implication.
pub fn check_aggregation_consistency(
    lam_g: &Decomposition,
    lam_f: &Decomposition,
    trials: usize,
    rng_seed: u64,
    tol: f64,
) -> Result<CheckReport> {
    let (rg, rf) = (lam_g.rho(), lam_f.rho());
    if !same_space(rg.space(), rf.space()) {
        return Err(Error::SpaceMismatch);
    }
    if rg.domain() != rf.domain() {
        return Err(Error::AlgebraMismatch("aggregations live on different domains".into()));
    }
    if rg.dim() != rf.dim() {
        return Err(Error::DimMismatch { expected: rg.dim(), got: rf.dim() });
    }
    let d = rg.dim();
    let mut report = CheckReport::new("aggregation_consistency");
    for k in 0..trials {
        let mut rng = trial_rng(rng_seed, k);
        let x = measurable_vector(&mut rng, rg.domain(), d, -2.0, 2.0);
        let gap = nonneg_perturbation(&mut rng, rg.domain(), d, 0.5, false);
        let outcome = (|| {
            let lg = lam_g.lambda(&x)?;
            let lf = lam_f.lambda(&x)?;
            let cg = lam_g.f_lambda_inverse(&lg, INNER_TOL)?;
            let cf = lam_f.f_lambda_inverse(&lf, INNER_TOL)?;
            let mut r = cg.max_abs_diff(&cf);
            let base = cf.diagonal(d);
            let up = base.zip_with(&gap, |a, b| a + b)?;
            let down = base.zip_with(&gap, |a, b| a - b)?;
            // Λ_F(up) ≥ Λ_F(X) ⟹ Λ_G(up) ≥ Λ_G(X), mirrored for `down`
            r = r.max(shortfall(&lam_g.lambda(&up)?, &lg));
            r = r.max(shortfall(&lg, &lam_g.lambda(&down)?));
            Ok::<_, Error>((r, cg, cf))
        })();
        match outcome {
            Ok((r, cg, cf)) => report.record(r <= tol, r, || {
                Failure::new(k, "aggregation").with("X", x.values()).observed(cg.values()).expected(cf.values())
            }),
            Err(e) => report.fail(f64::INFINITY, Failure::from_error(k, "aggregation", &e)),
        }
    }
    Ok(report)
}

/// For `X` independent of the target of `rho_h`, the conditional cash
/// equivalent equals the unconditional one.
pub fn check_lemma_independent_constant(rho: &Crm, rho_h: &Crm, x: &RandomVector, tol: f64) -> Result<CheckReport> {
    check_pair(rho, rho_h)?;
    if !rho.target().is_trivial() {
        return Err(Error::AlgebraMismatch("the unconditional measure needs a trivial target".into()));
    }
    if !is_independent(x, rho_h.target())? {
        return Err(Error::NotIndependent);
    }
    let mut report = CheckReport::new("independent_constant");
    let conditional = rho_h.f_rho_inverse(&rho_h.eval(x)?, INNER_TOL)?;
    let plain = rho.f_rho_inverse(&rho.eval(x)?, INNER_TOL)?;
    let r = conditional.max_abs_diff(&plain);
    report.record(r <= tol, r, || {
        Failure::new(0, "independent_constant")
            .with("X", x.values())
            .observed(conditional.values())
            .expected(plain.values())
    });
    Ok(report)
}

/// Block-wise least-squares fit `Ũ = α·U + β`.
#[derive(Debug, Clone)]
pub struct AffineFit {
    pub alpha: RandomVariable,
    pub beta: RandomVariable,
    pub residual: f64,
}

pub fn fit_affine(
    u: &StochasticUtility,
    u_tilde: &StochasticUtility,
    h: &SigmaAlgebra,
    sample_points: &[f64],
) -> Result<AffineFit> {
    if !same_space(u.space(), u_tilde.space()) || !same_space(u.space(), h.space()) {
        return Err(Error::SpaceMismatch);
    }
    if sample_points.is_empty() {
        return Err(Error::DegenerateFit("no sample points".into()));
    }
    let n = u.space().len();
    let (mut alpha, mut beta) = (vec![0.0; n], vec![0.0; n]);
    let mut residual = 0.0_f64;
    for (b, block) in h.blocks().iter().enumerate() {
        let pairs: Vec<(f64, f64)> = block
            .iter()
            .flat_map(|&s| sample_points.iter().map(move |&t| (u.eval(s, t), u_tilde.eval(s, t))))
            .collect();
        let m = pairs.len() as f64;
        let mx = pairs.iter().map(|p| p.0).sum::<f64>() / m;
        let my = pairs.iter().map(|p| p.1).sum::<f64>() / m;
        let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        if sxx <= 1e-24 * m * (1.0 + mx * mx) {
            return Err(Error::DegenerateFit(format!("U is constant on block {b}")));
        }
        let a = sxy / sxx;
        if a < 1e-9 {
            return Err(Error::DegenerateFit(format!("slope {a:e} on block {b} is not positive")));
        }
        let c = my - a * mx;
        for &(x, y) in &pairs {
            residual = residual.max((y - a * x - c).abs());
        }
        for &s in block {
            alpha[s] = a;
            beta[s] = c;
        }
    }
    Ok(AffineFit {
        alpha: RandomVariable::new(u.space(), alpha)?,
        beta: RandomVariable::new(u.space(), beta)?,
        residual,
    })
}

/// `‖E[fine | coarse] − coarse_value‖_∞`.
pub fn martingale_residual(fine: &RandomVariable, coarse_value: &RandomVariable, coarse: &SigmaAlgebra) -> Result<f64> {
    Ok(cond_expectation(fine, coarse)?.max_abs_diff(coarse_value))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiagonalClass {
    Linear,
    Entropic,
    Neither,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub class: DiagonalClass,
    pub beta_hat: Option<f64>,
    /// Max fit errors relative to the range of `f_u` on the grid.
    pub linear_residual: f64,
    pub entropic_residual: f64,
    pub normalization_residual: f64,
    /// `ρ(F𝟙_d + m𝟙_d) = ρ(F𝟙_d) − m` on sampled `F`.
    pub cash_additive: bool,
    /// Convexity of `F ↦ ρ(F𝟙_d)` on sampled pairs.
    pub convex: bool,
}

/// 41 equispaced points on `[−5, 5]`.
pub fn default_grid() -> Vec<f64> {
    (0..41).map(|k| -5.0 + 0.25 * k as f64).collect()
}

/// Least squares `y ≈ a·x + b`; returns `(a, b, max |error|)`.
fn line_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let a = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let b = my - a * mx;
    let err = x.iter().zip(y).map(|(u, v)| (v - a * u - b).abs()).fold(0.0, f64::max);
    (a, b, err)
}

const NORMALIZATION_TOL: f64 = 1e-8;

/// Sorts the diagonal `f_u` of a normalized certainty-equivalent CRM into
/// linear, entropic or neither.
pub fn classify_diagonal(rho: &Crm, grid: &[f64], tol: f64) -> Result<Classification> {
    if grid.len() < 3 {
        return Err(Error::DegenerateFit("the grid needs at least three points".into()));
    }
    let space = rho.space();
    let mut normalization_residual = 0.0_f64;
    for &t in grid {
        let v = rho.f_rho(&RandomVariable::constant(space, t))?;
        normalization_residual =
            normalization_residual.max(v.values().iter().map(|y| (y + t).abs()).fold(0.0, f64::max));
    }
    if normalization_residual > NORMALIZATION_TOL {
        return Err(Error::NotNormalized { residual: normalization_residual });
    }
    let u = rho
        .utility()
        .ok_or_else(|| Error::Unsupported("classification needs a certainty-equivalent representation".into()))?;
    let f: Vec<f64> = grid.iter().map(|&t| u.diag(t)).collect();
    let range = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - f.iter().cloned().fold(f64::INFINITY, f64::min);
    let (_, _, lin_err) = line_fit(grid, &f);
    let linear_residual = lin_err / range;

    let mut beta_hat = None;
    let mut entropic_residual = f64::INFINITY;
    let logs: Option<Vec<f64>> = f.windows(2).map(|w| (w[1] > w[0]).then(|| (w[1] - w[0]).ln())).collect();
    if let Some(logs) = logs {
        let (slope, _, _) = line_fit(&grid[..grid.len() - 1], &logs);
        let beta = -slope;
        if beta > 1e-9 {
            let basis: Vec<f64> = grid.iter().map(|t| (-beta * t).exp()).collect();
            let (coef, _, err) = line_fit(&basis, &f);
            if coef < 0.0 {
                beta_hat = Some(beta);
                entropic_residual = err / range;
            }
        }
    }
    let class = if linear_residual <= tol {
        DiagonalClass::Linear
    } else if entropic_residual <= tol {
        DiagonalClass::Entropic
    } else {
        DiagonalClass::Neither
    };
    let (cash_additive, convex) = diagonal_hypotheses(rho)?;
    Ok(Classification {
        class,
        beta_hat,
        linear_residual,
        entropic_residual: if entropic_residual.is_finite() { entropic_residual } else { f64::MAX },
        normalization_residual,
        cash_additive,
        convex,
    })
}

fn diagonal_hypotheses(rho: &Crm) -> Result<(bool, bool)> {
    const SAMPLES: usize = 20;
    const TOL: f64 = 1e-8;
    let d = rho.dim();
    let (mut cash, mut convex) = (true, true);
    for k in 0..SAMPLES {
        let mut rng = trial_rng(0x5eed, k);
        let f = measurable_variable(&mut rng, rho.domain(), -2.0, 2.0);
        let g = measurable_variable(&mut rng, rho.domain(), -2.0, 2.0);
        let m = rng.gen_range(-2.0..2.0);
        let lam = rng.gen_range(0.0..1.0);
        let rf = rho.eval(&f.diagonal(d))?;
        let shifted = rho.eval(&f.map(|v| v + m).diagonal(d))?;
        cash &= shifted.max_abs_diff(&rf.map(|v| v - m)) <= TOL;
        let rg = rho.eval(&g.diagonal(d))?;
        let mix = f.zip_with(&g, |a, b| lam * a + (1.0 - lam) * b)?;
        let rm = rho.eval(&mix.diagonal(d))?;
        let chord = rf.zip_with(&rg, |a, b| lam * a + (1.0 - lam) * b)?;
        convex &= dominates(&chord, &rm, TOL);
    }
    Ok((cash, convex))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crm::OuterMap;
    use crate::probspace::{product_space, FiniteProbSpace, SpaceRef};
    use crate::utility::{PiecewiseLinear, ScalarMap, Utility};

    fn halves(s: &SpaceRef) -> SigmaAlgebra {
        SigmaAlgebra::new(s, vec![vec![0, 1], vec![2, 3]]).unwrap()
    }

    fn entropic(s: &SpaceRef, beta: f64, w: Vec<f64>, target: &SigmaAlgebra) -> Crm {
        let u = Utility::exponential(1.0, 0.0, beta, w).unwrap();
        Crm::cert_equiv(u, OuterMap::Negation, &SigmaAlgebra::discrete(s), target).unwrap()
    }

    fn mixed(s: &SpaceRef) -> Crm {
        let us = vec![
            Utility::linear(1.0, 0.0, vec![0.9, 0.1]).unwrap(),
            Utility::linear(1.0, 0.0, vec![0.1, 0.9]).unwrap(),
        ];
        Crm::mixed_utility(us, &halves(s), OuterMap::Negation, &SigmaAlgebra::discrete(s)).unwrap()
    }

    #[test]
    fn shared_beta_pair_is_consistent() {
        let s = FiniteProbSpace::shared(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let g = SigmaAlgebra::trivial(&s);
        let (rg, rh) = (entropic(&s, 1.3, vec![0.4, 0.6], &g), entropic(&s, 1.3, vec![0.4, 0.6], &halves(&s)));
        assert!(check_consistency_recursive(&rg, &rh, 100, 5, 1e-10).unwrap().passed());
        assert!(check_consistency_definitional(&rg, &rh, 100, 5, 1e-10).unwrap().passed());
    }

    #[test]
    fn outer_map_does_not_matter_for_consistency() {
        let s = FiniteProbSpace::uniform(4).unwrap();
        let u = Utility::exponential(1.0, 0.0, 0.8, vec![0.5, 0.5]).unwrap();
        let t = SigmaAlgebra::discrete(&s);
        let rg = Crm::cert_equiv(u.clone(), OuterMap::AffineNeg { a: 3.0, c: -1.0 }, &t, &SigmaAlgebra::trivial(&s))
            .unwrap();
        let table = PiecewiseLinear::new(vec![-1.0, 0.0, 2.0], vec![-2.0, 0.0, 0.5]).unwrap();
        let g_h = OuterMap::StateWise {
            maps: vec![
                OuterMap::NegTable { table: table.clone() },
                OuterMap::NegTable { table },
                OuterMap::AffineNeg { a: 0.5, c: 2.0 },
                OuterMap::AffineNeg { a: 0.5, c: 2.0 },
            ],
        };
        let rh = Crm::cert_equiv(u, g_h, &t, &halves(&s)).unwrap();
        assert!(check_consistency_recursive(&rg, &rh, 100, 2, 1e-10).unwrap().passed());
        assert!(check_consistency_definitional(&rg, &rh, 100, 2, 1e-10).unwrap().passed());
    }

    #[test]
    fn mixed_beta_pair_fails_both_forms() {
        let s = FiniteProbSpace::uniform(4).unwrap();
        let rg = entropic(&s, 1.0, vec![1.0], &SigmaAlgebra::trivial(&s));
        let rh = entropic(&s, 2.0, vec![1.0], &halves(&s));
        // hand oracle on X = (0, 1, 0, 1)
        let x = RandomVector::from_flat(&s, 1, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let rho_h = 0.5 * ((1.0 + (-2.0f64).exp()) / 2.0).ln();
        let direct = ((1.0 + (-1.0f64).exp()) / 2.0).ln();
        // both H-blocks see (0, 1), so the cash equivalent −ρ_H(X) is constant
        let recursed = rho_h;
        assert!((rg.eval(&x).unwrap().get(0) - direct).abs() < 1e-14);
        assert!((direct - recursed).abs() > 1e-3);

        let rec = check_consistency_recursive(&rg, &rh, 100, 1, 1e-8).unwrap();
        let def = check_consistency_definitional(&rg, &rh, 100, 1, 1e-8).unwrap();
        assert!(!rec.passed() && !def.passed());
        assert!(!rec.failures.is_empty() && !def.failures.is_empty());
        assert!(def.failures[0].witness.contains_key("Y"));
    }

    #[test]
    fn pair_preconditions() {
        let s = FiniteProbSpace::uniform(4).unwrap();
        let rg = entropic(&s, 1.0, vec![1.0], &halves(&s));
        let rh = entropic(&s, 1.0, vec![1.0], &SigmaAlgebra::trivial(&s));
        assert!(matches!(check_consistency_recursive(&rg, &rh, 1, 0, 1e-8), Err(Error::AlgebraMismatch(_))));
    }

    #[test]
    fn decomposition_of_cert_equiv() {
        let s = FiniteProbSpace::uniform(4).unwrap();
        let u = Utility::exponential(1.0, 0.5, 1.2, vec![0.3, 0.7]).unwrap();
        let rho = Crm::cert_equiv(u.clone(), OuterMap::Negation, &SigmaAlgebra::discrete(&s), &halves(&s)).unwrap();
        let dec = extract_decomposition(&rho).unwrap();
        assert!(dec.risk_antitone);
        let x = RandomVector::from_rows(&s, vec![vec![1.0, -1.0], vec![0.0, 2.0], vec![-0.5, 0.5], vec![2.0, 2.0]])
            .unwrap();
        let lam = dec.lambda(&x).unwrap();
        for st in 0..4 {
            let expected = u.diag_inverse(u.eval(x.row(st)), 1e-14).unwrap();
            assert!((lam.get(st) - expected).abs() < 1e-12);
        }
        // η(F) = −f_u⁻¹(E[f_u(F)|G])
        let eta = dec.eta(&lam).unwrap();
        let ef = cond_expectation(&lam.map(|t| u.diag(t)), &halves(&s)).unwrap();
        let expected = ef.map(|v| -u.diag_inverse(v, 1e-14).unwrap());
        assert!(eta.max_abs_diff(&expected) < 1e-11);
        assert!(verify_decomposition(&rho, &dec, 100, 4, 1e-8).passed());
    }

    #[test]
    fn linear_aggregation_is_weighted_mean() {
        let s = FiniteProbSpace::uniform(2).unwrap();
        let u = Utility::linear(1.0, 0.0, vec![0.5, 0.5]).unwrap();
        let rho =
            Crm::cert_equiv(u, OuterMap::Negation, &SigmaAlgebra::discrete(&s), &SigmaAlgebra::trivial(&s)).unwrap();
        let dec = extract_decomposition(&rho).unwrap();
        assert!((dec.lambda_at(&[2.0, 4.0], 0).unwrap() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn corrupted_aggregation_is_caught() {
        let s = FiniteProbSpace::uniform(4).unwrap();
        let rho = entropic(&s, 1.0, vec![0.5, 0.5], &halves(&s));
        let dec = extract_decomposition(&rho).unwrap().corrupted(2);
        assert!(!verify_decomposition(&rho, &dec, 20, 4, 1e-8).passed());
    }

    #[test]
    fn univariate_normalized_aggregation_is_identity_like() {
        let s = FiniteProbSpace::uniform(4).unwrap();
        let u = Utility::exponential(1.0, 0.0, 2.0, vec![1.0]).unwrap();
        let rho = Crm::cert_equiv(u, OuterMap::AffineNeg { a: 2.0, c: 1.0 }, &SigmaAlgebra::discrete(&s), &halves(&s))
            .unwrap()
            .normalize();
        let dec = extract_decomposition(&rho).unwrap();
        let x = RandomVector::from_flat(&s, 1, vec![0.3, -1.0, 2.0, 0.0]).unwrap();
        let back = dec.f_lambda_inverse(&dec.lambda(&x).unwrap(), 1e-13).unwrap();
        assert!(back.max_abs_diff(&x.coordinate(0)) < 1e-10);
    }

    #[test]
    fn risk_antitonicity_controls() {
        let s = FiniteProbSpace::uniform(4).unwrap();
        let rho = entropic(&s, 1.0, vec![0.5, 0.5], &SigmaAlgebra::trivial(&s));
        assert!(check_risk_antitonicity(&rho, 100, 8, 1e-8).passed());
        let bad = mixed(&s);
        // hand witness: equal aggregation at every state, different risk
        let x =
            RandomVector::from_rows(&s, vec![vec![2.0, 0.0], vec![2.0, 0.0], vec![0.0, 2.0], vec![0.0, 2.0]]).unwrap();
        let y =
            RandomVector::from_rows(&s, vec![vec![0.0, 2.0], vec![0.0, 2.0], vec![2.0, 0.0], vec![2.0, 0.0]]).unwrap();
        for st in 0..4 {
            let (a, b) = (bad.realization(x.row(st), st).unwrap(), bad.realization(y.row(st), st).unwrap());
            assert!((a - b).abs() < 1e-12);
        }
        assert!((bad.eval(&x).unwrap().get(0) - bad.eval(&y).unwrap().get(0)).abs() > 1.0);
        assert!(!check_risk_antitonicity(&bad, 100, 8, 1e-8).passed());
        assert!(!extract_decomposition(&bad).unwrap().risk_antitone);
    }

    #[test]
    fn aggregation_consistency_controls() {
        let s = FiniteProbSpace::uniform(4).unwrap();
        let f = SigmaAlgebra::discrete(&s);
        let rg = entropic(&s, 1.0, vec![0.5, 0.5], &SigmaAlgebra::trivial(&s));
        let rf = entropic(&s, 1.0, vec![0.5, 0.5], &f);
        let (dg, df) = (extract_decomposition(&rg).unwrap(), extract_decomposition(&rf).unwrap());
        assert!(check_aggregation_consistency(&dg, &df, 100, 3, 1e-8).unwrap().passed());
        let other = extract_decomposition(&entropic(&s, 2.0, vec![0.8, 0.2], &f)).unwrap();
        assert!(!check_aggregation_consistency(&dg, &other, 100, 3, 1e-8).unwrap().passed());
        let alpha = RandomVariable::new(&s, vec![1.0, -1.0, 0.5, 0.0]).unwrap();
        let lhs = dg.f_lambda_inverse(&dg.f_lambda(&alpha).unwrap(), 1e-13).unwrap();
        assert!(lhs.max_abs_diff(&alpha) < 1e-12);
    }

    #[test]
    fn independent_constant_lemma() {
        let u4 = FiniteProbSpace::new(vec![0.25; 4]).unwrap();
        let q = FiniteProbSpace::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let p = product_space(&u4, &q).unwrap();
        let t = SigmaAlgebra::discrete(&p.space);
        let u = Utility::exponential(1.0, 0.0, 1.5, vec![0.5, 0.5]).unwrap();
        let rho = Crm::cert_equiv(u.clone(), OuterMap::Negation, &t, &SigmaAlgebra::trivial(&p.space)).unwrap();
        let rho_h = Crm::cert_equiv(u, OuterMap::AffineNeg { a: 2.0, c: 0.0 }, &t, &p.first).unwrap();
        let small = FiniteProbSpace::shared(q.probs().to_vec()).unwrap();
        let x2 =
            RandomVector::from_rows(&small, vec![vec![1.0, 0.0], vec![-1.0, 2.0], vec![0.5, 0.5], vec![0.0, -2.0]])
                .unwrap();
        let x = p.lift_second(&x2).unwrap();
        assert!(check_lemma_independent_constant(&rho, &rho_h, &x, 1e-10).unwrap().passed());
        let c = RandomVector::constant(&p.space, &[0.7, 0.7]);
        let r = check_lemma_independent_constant(&rho.normalize(), &rho_h.normalize(), &c, 1e-10).unwrap();
        assert!(r.passed());
        let dep = p
            .lift_first(
                &RandomVector::from_rows(
                    &FiniteProbSpace::uniform(4).unwrap(),
                    vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0]],
                )
                .unwrap(),
            )
            .unwrap();
        assert_eq!(check_lemma_independent_constant(&rho, &rho_h, &dep, 1e-10).unwrap_err(), Error::NotIndependent);
    }

    #[test]
    fn affine_fit_examples() {
        let s = FiniteProbSpace::uniform(4).unwrap();
        let h = halves(&s);
        let u = Utility::exponential(1.0, 0.0, 1.0, vec![1.0]).unwrap();
        let base = StochasticUtility::new(
            &s,
            vec![
                ScalarMap::identity(),
                ScalarMap::identity(),
                ScalarMap::Diagonal { utility: u.clone(), scale: 1.0, shift: 0.0 },
                ScalarMap::Diagonal { utility: u, scale: 1.0, shift: 0.0 },
            ],
        )
        .unwrap();
        let grid: Vec<f64> = (0..21).map(|k| -2.0 + 0.2 * k as f64).collect();
        let two = RandomVariable::constant(&s, 2.0);
        let one = RandomVariable::constant(&s, 1.0);
        let fit = fit_affine(&base, &base.affine_transform(&two, &one).unwrap(), &h, &grid).unwrap();
        assert!(fit.alpha.max_abs_diff(&two) < 1e-9 && fit.beta.max_abs_diff(&one) < 1e-9);
        assert!(fit.residual <= 1e-8);
        let same = fit_affine(&base, &base, &h, &grid).unwrap();
        assert!(
            same.alpha.max_abs_diff(&one) < 1e-12 && same.beta.max_abs_diff(&RandomVariable::constant(&s, 0.0)) < 1e-12
        );

        let ident = StochasticUtility::deterministic(&s, ScalarMap::identity());
        let cube = PiecewiseLinear::tabulate(|t| t.powi(3), -3.0, 3.0, 601).unwrap();
        let cubed = StochasticUtility::deterministic(&s, ScalarMap::Table { table: cube });
        let bad = fit_affine(&ident, &cubed, &h, &grid).unwrap();
        // best line through t³ on [−2, 2]: slope from the normal equations
        let m = grid.len() as f64;
        let slope = grid.iter().map(|t| t.powi(4)).sum::<f64>() / grid.iter().map(|t| t * t).sum::<f64>();
        let oracle = grid.iter().map(|t| (t.powi(3) - slope * t).abs()).fold(0.0, f64::max);
        assert!(m > 0.0 && (bad.residual - oracle).abs() < 1e-2);
        assert!(bad.residual > 0.1);

        let flat = StochasticUtility::deterministic(&s, ScalarMap::Affine { scale: 1.0, shift: 0.0 });
        assert!(matches!(fit_affine(&flat, &ident, &h, &[1.0]), Err(Error::DegenerateFit(_))));
    }

    #[test]
    fn classifier_examples() {
        let s = FiniteProbSpace::uniform(4).unwrap();
        let t = SigmaAlgebra::discrete(&s);
        let g = halves(&s);
        let grid = default_grid();
        let ent = entropic(&s, 1.0, vec![0.5, 0.5], &g);
        let c = classify_diagonal(&ent, &grid, 1e-8).unwrap();
        assert_eq!(c.class, DiagonalClass::Entropic);
        assert!((c.beta_hat.unwrap() - 1.0).abs() < 1e-6);
        assert!(c.cash_additive && c.convex);

        let lin =
            Crm::cert_equiv(Utility::linear(2.0, 1.0, vec![0.5, 0.5]).unwrap(), OuterMap::Negation, &t, &g).unwrap();
        let c = classify_diagonal(&lin, &grid, 1e-8).unwrap();
        assert_eq!(c.class, DiagonalClass::Linear);
        assert!(c.cash_additive && c.convex);

        let cubic = PiecewiseLinear::tabulate(|x| x.powi(3) + x, -6.0, 6.0, 2401).unwrap();
        let u = Utility::sum_of(vec![cubic.clone(), cubic]).unwrap();
        let cub = Crm::cert_equiv(u, OuterMap::Negation, &t, &g).unwrap();
        let c = classify_diagonal(&cub, &grid, 1e-6).unwrap();
        assert_eq!(c.class, DiagonalClass::Neither);
        assert!(!c.cash_additive);

        let scaled = Crm::cert_equiv(
            Utility::linear(1.0, 0.0, vec![1.0]).unwrap(),
            OuterMap::AffineNeg { a: 2.0, c: 0.0 },
            &t,
            &g,
        )
        .unwrap();
        assert!(matches!(classify_diagonal(&scaled, &grid, 1e-8), Err(Error::NotNormalized { .. })));
    }
}
