//! Conditional risk measures `ρ_G: L∞(T; d) → L∞(G)` on a finite space.

use std::cell::RefCell;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probspace::{
    cond_expectation, cond_law_equal, same_space, RandomVariable, RandomVector, SigmaAlgebra, SpaceRef, EPS,
};
use crate::report::{CheckReport, Failure};
use crate::roots::{invert_decreasing, invert_increasing};
use crate::sampling::{measurable_vector, nonneg_perturbation, random_event, trial_rng};
use crate::utility::{PiecewiseLinear, Utility};

/// Target residual of scalar solves nested inside evaluations.
pub const INNER_TOL: f64 = 1e-13;

/// Tolerance for equalities asserted by the axiom checkers.
pub const EVAL_TOL: f64 = 1e-10;

/// Strictly decreasing scalar map applied after the certainty equivalent.
/// Every variant is a bijection of ℝ, so `0` is always attained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OuterMap {
    /// `t ↦ −t`.
    Negation,
    /// `t ↦ −a·t + c`.
    AffineNeg { a: f64, c: f64 },
    /// `t ↦ −table(t)`.
    NegTable { table: PiecewiseLinear },
    /// One map per state; must be constant on the target blocks.
    StateWise { maps: Vec<OuterMap> },
}

impl OuterMap {
    fn at(&self, state: usize) -> &OuterMap {
        match self {
            Self::StateWise { maps } => &maps[state],
            other => other,
        }
    }

    pub fn eval(&self, state: usize, t: f64) -> f64 {
        match self.at(state) {
            Self::Negation => -t,
            Self::AffineNeg { a, c } => -a * t + c,
            Self::NegTable { table } => -table.eval(t),
            Self::StateWise { .. } => unreachable!("nested state-wise maps are rejected"),
        }
    }

    pub fn inverse(&self, state: usize, y: f64) -> f64 {
        match self.at(state) {
            Self::Negation => -y,
            Self::AffineNeg { a, c } => (c - y) / a,
            Self::NegTable { table } => table.inverse(-y),
            Self::StateWise { .. } => unreachable!("nested state-wise maps are rejected"),
        }
    }

    fn validate_scalar(&self) -> Result<()> {
        match self {
            Self::Negation => Ok(()),
            Self::AffineNeg { a, c } => {
                if *a > 0.0 && a.is_finite() && c.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidOuter("affine outer map needs a > 0".into()))
                }
            }
            Self::NegTable { table } => table.validate().map_err(|e| Error::InvalidOuter(e.to_string())),
            Self::StateWise { .. } => Err(Error::InvalidOuter("state-wise maps cannot be nested".into())),
        }
    }

    /// Checks well-formedness and constancy on the blocks of `target`.
    pub fn validate(&self, target: &SigmaAlgebra) -> Result<()> {
        match self {
            Self::StateWise { maps } => {
                if maps.len() != target.space().len() {
                    return Err(Error::DimMismatch { expected: target.space().len(), got: maps.len() });
                }
                maps.iter().try_for_each(Self::validate_scalar)?;
                for block in target.blocks() {
                    if block.iter().any(|&s| maps[s] != maps[block[0]]) {
                        return Err(Error::AlgebraMismatch("outer map is not constant on the target blocks".into()));
                    }
                }
                Ok(())
            }
            scalar => scalar.validate_scalar(),
        }
    }
}

/// How a [`Crm`] computes its value.
#[derive(Debug, Clone)]
pub enum Evaluator {
    /// `g(f_u⁻¹(E[u(X)|G]))`.
    CertEquiv { utility: Utility, outer: OuterMap },
    /// `−f_ρ⁻¹(ρ(X))`.
    Normalized(Box<Crm>),
    /// `−f_{u_s}⁻¹(E[u_t(X)|G])`.
    BackwardCertEquiv { inner: Utility, outer: Utility },
    /// `ω ↦ ρ̃(X(ω), ω)`, i.e. minus the aggregation of `ρ`; target equals domain.
    NegAggregation(Box<Crm>),
    /// Ignores its argument.
    Constant(f64),
    /// `−Σ_ω (ω+1)·X_{ω,1}` on a trivial target.
    StateWeighted,
    /// Certainty equivalent whose utility switches with the blocks of `mix`:
    /// `c` solves `E[f_{u_B}(c)|G] = E[u_B(X)|G]`, output `g(c)`.
    MixedUtility { utilities: Vec<Utility>, mix: SigmaAlgebra, outer: OuterMap },
}

/// A conditional risk measure with domain algebra `T` and target `G ⊆ T`.
#[derive(Debug, Clone)]
pub struct Crm {
    space: SpaceRef,
    domain: SigmaAlgebra,
    target: SigmaAlgebra,
    dim: usize,
    evaluator: Evaluator,
}

fn check_nested(domain: &SigmaAlgebra, target: &SigmaAlgebra) -> Result<()> {
    if !same_space(domain.space(), target.space()) {
        return Err(Error::SpaceMismatch);
    }
    if !domain.refines(target)? {
        return Err(Error::AlgebraMismatch("target algebra is not contained in the domain".into()));
    }
    Ok(())
}

/// Certainty-equivalent CRM `g(f_u⁻¹(E[u(X)|G]))` on `L∞(T; d)`.
pub fn make_cert_equiv(u: Utility, g: OuterMap, domain: &SigmaAlgebra, target: &SigmaAlgebra) -> Result<Crm> {
    Crm::cert_equiv(u, g, domain, target)
}

impl Crm {
    pub fn cert_equiv(u: Utility, g: OuterMap, domain: &SigmaAlgebra, target: &SigmaAlgebra) -> Result<Self> {
        check_nested(domain, target)?;
        u.validate()?;
        g.validate(target)?;
        Ok(Self {
            space: domain.space().clone(),
            domain: domain.clone(),
            target: target.clone(),
            dim: u.dim(),
            evaluator: Evaluator::CertEquiv { utility: u, outer: g },
        })
    }

    /// `−f_{outer}⁻¹(E[inner(X)|G])`; `outer`'s diagonal range must contain
    /// that of `inner`.
    pub fn backward_cert_equiv(
        inner: Utility,
        outer: Utility,
        domain: &SigmaAlgebra,
        target: &SigmaAlgebra,
    ) -> Result<Self> {
        check_nested(domain, target)?;
        inner.validate()?;
        outer.validate()?;
        if inner.dim() != outer.dim() {
            return Err(Error::DimMismatch { expected: inner.dim(), got: outer.dim() });
        }
        Ok(Self {
            space: domain.space().clone(),
            domain: domain.clone(),
            target: target.clone(),
            dim: inner.dim(),
            evaluator: Evaluator::BackwardCertEquiv { inner, outer },
        })
    }

    pub fn constant(domain: &SigmaAlgebra, dim: usize, c: f64) -> Self {
        let space = domain.space().clone();
        Self {
            target: SigmaAlgebra::trivial(&space),
            domain: domain.clone(),
            space,
            dim,
            evaluator: Evaluator::Constant(c),
        }
    }

    /// Law-dependent negative control; reads the first coordinate only.
    pub fn state_weighted(space: &SpaceRef, dim: usize) -> Self {
        Self {
            space: space.clone(),
            domain: SigmaAlgebra::discrete(space),
            target: SigmaAlgebra::trivial(space),
            dim,
            evaluator: Evaluator::StateWeighted,
        }
    }

    /// Negative control for the decomposition results, with trivial target.
    pub fn mixed_utility(
        utilities: Vec<Utility>,
        mix: &SigmaAlgebra,
        outer: OuterMap,
        domain: &SigmaAlgebra,
    ) -> Result<Self> {
        if !same_space(mix.space(), domain.space()) {
            return Err(Error::SpaceMismatch);
        }
        if utilities.len() != mix.num_blocks() {
            return Err(Error::DimMismatch { expected: mix.num_blocks(), got: utilities.len() });
        }
        let dim = utilities.first().map(Utility::dim).unwrap_or(0);
        for u in &utilities {
            u.validate()?;
            if u.dim() != dim {
                return Err(Error::DimMismatch { expected: dim, got: u.dim() });
            }
        }
        let target = SigmaAlgebra::trivial(domain.space());
        outer.validate(&target)?;
        Ok(Self {
            space: domain.space().clone(),
            domain: domain.clone(),
            target,
            dim,
            evaluator: Evaluator::MixedUtility { utilities, mix: mix.clone(), outer },
        })
    }

    /// The normalized CRM `ρ̄ = −f_ρ⁻¹∘ρ`.
    pub fn normalize(&self) -> Self {
        Self { evaluator: Evaluator::Normalized(Box::new(self.clone())), ..self.clone() }
    }

    /// `−Λ` as a CRM on `L∞(T; d)` with target `T`.
    pub fn negated_aggregation(&self) -> Self {
        Self {
            target: self.domain.clone(),
            evaluator: Evaluator::NegAggregation(Box::new(self.clone())),
            ..self.clone()
        }
    }

    pub fn space(&self) -> &SpaceRef {
        &self.space
    }

    pub fn domain(&self) -> &SigmaAlgebra {
        &self.domain
    }

    pub fn target(&self) -> &SigmaAlgebra {
        &self.target
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn evaluator(&self) -> &Evaluator {
        &self.evaluator
    }

    /// The utility of a certainty-equivalent representation, if known.
    pub fn utility(&self) -> Option<&Utility> {
        match &self.evaluator {
            Evaluator::CertEquiv { utility, .. } => Some(utility),
            Evaluator::BackwardCertEquiv { inner, .. } => Some(inner),
            Evaluator::Normalized(inner) => inner.utility(),
            _ => None,
        }
    }

    fn check_input(&self, x: &RandomVector) -> Result<()> {
        if !same_space(&self.space, x.space()) {
            return Err(Error::SpaceMismatch);
        }
        if x.dim() != self.dim {
            return Err(Error::DimMismatch { expected: self.dim, got: x.dim() });
        }
        if !x.is_measurable(&self.domain)? {
            return Err(Error::NotMeasurable("domain"));
        }
        Ok(())
    }

    fn check_target_measurable(&self, a: &RandomVariable) -> Result<()> {
        if !same_space(&self.space, a.space()) {
            return Err(Error::SpaceMismatch);
        }
        if !a.is_measurable(&self.target)? {
            return Err(Error::NotMeasurable("target"));
        }
        Ok(())
    }

    pub fn eval(&self, x: &RandomVector) -> Result<RandomVariable> {
        self.check_input(x)?;
        self.eval_unchecked(x)
    }

    fn eval_unchecked(&self, x: &RandomVector) -> Result<RandomVariable> {
        let n = self.space.len();
        let mut out = vec![0.0; n];
        match &self.evaluator {
            Evaluator::CertEquiv { utility, outer } => {
                let ce = cond_expectation(&x.map_rows(|r| utility.eval(r)), &self.target)?;
                for block in self.target.blocks() {
                    let c = utility.diag_inverse(ce.get(block[0]), INNER_TOL)?;
                    for &s in block {
                        out[s] = outer.eval(s, c);
                    }
                }
            }
            Evaluator::BackwardCertEquiv { inner, outer } => {
                let ce = cond_expectation(&x.map_rows(|r| inner.eval(r)), &self.target)?;
                for block in self.target.blocks() {
                    let c = -outer.diag_inverse(ce.get(block[0]), INNER_TOL)?;
                    for &s in block {
                        out[s] = c;
                    }
                }
            }
            Evaluator::Normalized(inner) => {
                let level = inner.eval_unchecked(x)?;
                let cash = inner.f_rho_inverse_unchecked(&level, INNER_TOL)?;
                return Ok(cash.map(|v| -v));
            }
            Evaluator::NegAggregation(inner) => {
                for (s, v) in out.iter_mut().enumerate() {
                    *v = inner.realization(x.row(s), s)?;
                }
            }
            Evaluator::Constant(c) => out.fill(*c),
            Evaluator::StateWeighted => {
                let total: f64 = x.rows().enumerate().map(|(s, r)| (s + 1) as f64 * r[0]).sum();
                out.fill(-total);
            }
            Evaluator::MixedUtility { utilities, mix, outer } => {
                let probs = self.space.probs();
                for block in self.target.blocks() {
                    let mass: f64 = block.iter().map(|&s| probs[s]).sum();
                    let rhs: f64 =
                        block.iter().map(|&s| probs[s] * utilities[mix.block_of(s)].eval(x.row(s))).sum::<f64>() / mass;
                    let diag = |t: f64| {
                        block.iter().map(|&s| probs[s] * utilities[mix.block_of(s)].diag(t)).sum::<f64>() / mass
                    };
                    let c = invert_increasing(diag, rhs, INNER_TOL)?;
                    for &s in block {
                        out[s] = outer.eval(s, c);
                    }
                }
            }
        }
        Ok(RandomVariable::from_raw(&self.space, out))
    }

    /// The realization `ρ̃(x, ω) = ρ(x·𝟙_Ω)(ω)` for a deterministic `x ∈ ℝᵈ`.
    pub fn realization(&self, x: &[f64], state: usize) -> Result<f64> {
        match &self.evaluator {
            Evaluator::CertEquiv { utility, outer } => {
                Ok(outer.eval(state, utility.diag_inverse(utility.eval(x), INNER_TOL)?))
            }
            Evaluator::BackwardCertEquiv { inner, outer } => Ok(-outer.diag_inverse(inner.eval(x), INNER_TOL)?),
            Evaluator::Normalized(inner) => {
                let level = inner.realization(x, state)?;
                Ok(-inner.solve_diagonal(state, level, INNER_TOL)?)
            }
            Evaluator::NegAggregation(inner) => inner.realization(x, state),
            Evaluator::Constant(c) => Ok(*c),
            Evaluator::StateWeighted => {
                let n = self.space.len() as f64;
                Ok(-x[0] * n * (n + 1.0) / 2.0)
            }
            Evaluator::MixedUtility { .. } => {
                let constant = RandomVector::constant(&self.space, x);
                Ok(self.eval_unchecked(&constant)?.get(state))
            }
        }
    }

    /// Solves `ρ̃(base + s·𝟙_d, state) = y` for the shift `s`.
    pub fn solve_shift(&self, base: &[f64], state: usize, y: f64, tol: f64) -> Result<f64> {
        if base.len() != self.dim {
            return Err(Error::DimMismatch { expected: self.dim, got: base.len() });
        }
        let failure = RefCell::new(None);
        let s = invert_decreasing(
            |s| {
                let x: Vec<f64> = base.iter().map(|b| b + s).collect();
                match self.realization(&x, state) {
                    Ok(v) => v,
                    Err(e) => {
                        failure.borrow_mut().get_or_insert(e);
                        f64::NAN
                    }
                }
            },
            y,
            tol,
        );
        match failure.into_inner() {
            Some(e) => Err(e),
            None => s,
        }
    }

    fn solve_diagonal(&self, state: usize, y: f64, tol: f64) -> Result<f64> {
        self.solve_shift(&vec![0.0; self.dim], state, y, tol)
    }

    /// `f_ρ(α) = ρ(α·𝟙_d)` for target-measurable `α`.
    pub fn f_rho(&self, alpha: &RandomVariable) -> Result<RandomVariable> {
        self.check_target_measurable(alpha)?;
        self.eval_unchecked(&alpha.diagonal(self.dim))
    }

    /// `f_ρ⁻¹(β)`, one decreasing bisection per target block.
    pub fn f_rho_inverse(&self, beta: &RandomVariable, tol: f64) -> Result<RandomVariable> {
        self.check_target_measurable(beta)?;
        self.f_rho_inverse_unchecked(beta, tol)
    }

    fn f_rho_inverse_unchecked(&self, beta: &RandomVariable, tol: f64) -> Result<RandomVariable> {
        let mut out = vec![0.0; self.space.len()];
        for block in self.target.blocks() {
            let rep = block[0];
            let t = self.solve_diagonal(rep, beta.get(rep), tol)?;
            for &s in block {
                out[s] = t;
            }
        }
        Ok(RandomVariable::from_raw(&self.space, out))
    }
}

fn positive_part_max(a: &RandomVariable, b: &RandomVariable) -> f64 {
    a.values().iter().zip(b.values()).map(|(x, y)| (x - y).max(0.0)).fold(0.0, f64::max)
}

/// `X ≥ Y`, `X ≠ Y` must give `ρ(X) ≤ ρ(Y)` with strict inequality somewhere.
pub fn check_strict_antitonicity(rho: &Crm, trials: usize, rng_seed: u64) -> CheckReport {
    let mut report = CheckReport::new("strict_antitonicity");
    for k in 0..trials {
        let mut rng = trial_rng(rng_seed, k);
        let y = measurable_vector(&mut rng, rho.domain(), rho.dim(), -2.0, 2.0);
        let gap = nonneg_perturbation(&mut rng, rho.domain(), rho.dim(), 0.5, true);
        let x = y.zip_with(&gap, |a, b| a + b).expect("same shape");
        match (rho.eval(&x), rho.eval(&y)) {
            (Ok(rx), Ok(ry)) => {
                let violation = positive_part_max(&rx, &ry);
                let strict = ry.values().iter().zip(rx.values()).any(|(b, a)| b - a > EPS);
                report.record(violation <= EPS && strict, violation, || {
                    Failure::new(k, if strict { "order" } else { "strictness" })
                        .with("X", x.values())
                        .with("Y", y.values())
                        .observed(rx.values())
                        .expected(ry.values())
                });
            }
            (Err(e), _) | (_, Err(e)) => report.fail(f64::INFINITY, Failure::from_error(k, "eval", &e)),
        }
    }
    report
}

/// `ρ(X𝟙_A + Y𝟙_{Aᶜ}) = ρ(X)𝟙_A + ρ(Y)𝟙_{Aᶜ}` for target events `A`.
pub fn check_locality(rho: &Crm, trials: usize, rng_seed: u64) -> CheckReport {
    let mut report = CheckReport::new("locality");
    for k in 0..trials {
        let mut rng = trial_rng(rng_seed, k);
        let x = measurable_vector(&mut rng, rho.domain(), rho.dim(), -2.0, 2.0);
        let y = measurable_vector(&mut rng, rho.domain(), rho.dim(), -2.0, 2.0);
        let event = random_event(&mut rng, rho.target());
        let z = x.splice(&y, &event).expect("same shape");
        let outcome = (|| {
            let lhs = rho.eval(&z)?;
            let rhs = rho.eval(&x)?.splice(&rho.eval(&y)?, &event)?;
            Ok::<_, Error>((lhs, rhs))
        })();
        match outcome {
            Ok((lhs, rhs)) => {
                let r = lhs.max_abs_diff(&rhs);
                report.record(r <= EVAL_TOL, r, || {
                    let mask: Vec<f64> = event.iter().map(|&b| f64::from(u8::from(b))).collect();
                    Failure::new(k, "locality")
                        .with("X", x.values())
                        .with("Y", y.values())
                        .with("A", &mask)
                        .observed(lhs.values())
                        .expected(rhs.values())
                });
            }
            Err(e) => report.fail(f64::INFINITY, Failure::from_error(k, "eval", &e)),
        }
    }
    report
}

/// `f_ρ̄(α) = −α` for the normalized measure and `ρ̄` is a fixed point of
/// normalization.
pub fn check_normalization(rho: &Crm, trials: usize, rng_seed: u64, tol: f64) -> CheckReport {
    let mut report = CheckReport::new("normalization");
    let bar = rho.normalize();
    let twice = bar.normalize();
    for k in 0..trials {
        let mut rng = trial_rng(rng_seed, k);
        let alpha = measurable_vector(&mut rng, rho.target(), 1, -3.0, 3.0).coordinate(0);
        let x = measurable_vector(&mut rng, rho.domain(), rho.dim(), -2.0, 2.0);
        let outcome = (|| {
            let on_const = bar.f_rho(&alpha)?;
            let neg = alpha.map(|v| -v);
            let once = bar.eval(&x)?;
            let again = twice.eval(&x)?;
            Ok::<_, Error>((on_const.max_abs_diff(&neg), once.max_abs_diff(&again), on_const, neg))
        })();
        match outcome {
            Ok((r1, r2, obs, exp)) => {
                let r = r1.max(r2);
                report.record(r <= tol, r, || {
                    Failure::new(k, if r1 >= r2 { "constants" } else { "idempotence" })
                        .with("alpha", alpha.values())
                        .with("X", x.values())
                        .observed(obs.values())
                        .expected(exp.values())
                });
            }
            Err(e) => report.fail(f64::INFINITY, Failure::from_error(k, "normalization", &e)),
        }
    }
    report
}

/// `f_ρ⁻¹∘f_ρ = id` on target-measurable constants and `f_ρ⁻¹` is defined on
/// every value of `ρ`.
pub fn check_inverse(rho: &Crm, trials: usize, rng_seed: u64, tol: f64) -> CheckReport {
    let mut report = CheckReport::new("inverse");
    for k in 0..trials {
        let mut rng = trial_rng(rng_seed, k);
        let alpha = measurable_vector(&mut rng, rho.target(), 1, -3.0, 3.0).coordinate(0);
        let x = measurable_vector(&mut rng, rho.domain(), rho.dim(), -2.0, 2.0);
        let outcome = (|| {
            let back = rho.f_rho_inverse(&rho.f_rho(&alpha)?, INNER_TOL)?;
            let v = rho.eval(&x)?;
            let image = rho.f_rho(&rho.f_rho_inverse(&v, INNER_TOL)?)?;
            Ok::<_, Error>((back.max_abs_diff(&alpha), image.max_abs_diff(&v), image, v))
        })();
        match outcome {
            Ok((r1, r2, obs, exp)) => {
                let r = r1.max(r2);
                report.record(r <= tol, r, || {
                    Failure::new(k, if r1 >= r2 { "round_trip" } else { "image" })
                        .with("alpha", alpha.values())
                        .with("X", x.values())
                        .observed(obs.values())
                        .expected(exp.values())
                });
            }
            Err(e) => report.fail(f64::INFINITY, Failure::from_error(k, "inverse", &e)),
        }
    }
    report
}

/// Groups of domain blocks that share a target block and have equal mass.
fn exchangeable_groups(rho: &Crm) -> Vec<Vec<usize>> {
    let domain = rho.domain();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for g_block in rho.target().blocks() {
        let mut t_blocks: Vec<usize> = g_block.iter().map(|&s| domain.block_of(s)).collect();
        t_blocks.sort_unstable();
        t_blocks.dedup();
        let mut local: Vec<Vec<usize>> = Vec::new();
        for b in t_blocks {
            let mass = domain.block_prob(b);
            match local.iter_mut().find(|grp| (domain.block_prob(grp[0]) - mass).abs() <= EPS) {
                Some(grp) => grp.push(b),
                None => local.push(vec![b]),
            }
        }
        groups.extend(local.into_iter().filter(|grp| grp.len() > 1));
    }
    groups
}

/// Permuting equal-mass domain blocks inside each target block must not
/// change the value.
pub fn check_cond_law_invariance(rho: &Crm, trials: usize, rng_seed: u64) -> CheckReport {
    let mut report = CheckReport::new("cond_law_invariance");
    let groups = exchangeable_groups(rho);
    let domain = rho.domain();
    for k in 0..trials {
        if groups.is_empty() {
            report.skip();
            continue;
        }
        let mut rng = trial_rng(rng_seed, k);
        let x = measurable_vector(&mut rng, domain, rho.dim(), -2.0, 2.0);
        let mut perm: Vec<usize> = (0..rho.space().len()).collect();
        for grp in &groups {
            let mut shuffled = grp.clone();
            shuffled.shuffle(&mut rng);
            if shuffled == *grp {
                let shift = rng.gen_range(1..grp.len());
                shuffled.rotate_left(shift);
            }
            for (&dst, &src) in grp.iter().zip(&shuffled) {
                let src_state = domain.blocks()[src][0];
                for &s in &domain.blocks()[dst] {
                    perm[s] = src_state;
                }
            }
        }
        let y = x.permute_rows(&perm);
        if !cond_law_equal(&x, &y, rho.target()).unwrap_or(false) {
            report.skip();
            continue;
        }
        match (rho.eval(&x), rho.eval(&y)) {
            (Ok(rx), Ok(ry)) => {
                let r = rx.max_abs_diff(&ry);
                report.record(r <= EVAL_TOL, r, || {
                    Failure::new(k, "law_invariance")
                        .with("X", x.values())
                        .with("Y", y.values())
                        .observed(ry.values())
                        .expected(rx.values())
                });
            }
            (Err(e), _) | (_, Err(e)) => report.fail(f64::INFINITY, Failure::from_error(k, "eval", &e)),
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probspace::FiniteProbSpace;

    fn entropic(space: &SpaceRef, beta: f64, d: usize, target: &SigmaAlgebra) -> Crm {
        let u = Utility::exponential(1.0, 0.0, beta, Utility::equal_weights(d)).unwrap();
        Crm::cert_equiv(u, OuterMap::Negation, &SigmaAlgebra::discrete(space), target).unwrap()
    }

    fn linear(space: &SpaceRef, w: Vec<f64>, g: OuterMap, target: &SigmaAlgebra) -> Crm {
        let u = Utility::linear(1.0, 0.0, w).unwrap();
        Crm::cert_equiv(u, g, &SigmaAlgebra::discrete(space), target).unwrap()
    }

    fn rows(space: &SpaceRef, r: Vec<Vec<f64>>) -> RandomVector {
        RandomVector::from_rows(space, r).unwrap()
    }

    #[test]
    fn entropic_value_on_two_states() {
        let s = FiniteProbSpace::uniform(2).unwrap();
        let rho = entropic(&s, 1.0, 1, &SigmaAlgebra::trivial(&s));
        let v = rho.eval(&rows(&s, vec![vec![0.0], vec![3f64.ln()]])).unwrap();
        let expected = (2.0f64 / 3.0).ln();
        assert!(v.values().iter().all(|x| (x - expected).abs() < 1e-14));
    }

    #[test]
    fn linear_is_negative_expectation() {
        let s = FiniteProbSpace::shared(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let h = SigmaAlgebra::new(&s, vec![vec![0, 1], vec![2, 3]]).unwrap();
        let rho = linear(&s, vec![0.25, 0.75], OuterMap::Negation, &h);
        let x = rows(&s, vec![vec![1.0, 2.0], vec![-1.0, 0.0], vec![4.0, 4.0], vec![0.0, 2.0]]);
        let v = rho.eval(&x).unwrap();
        let agg = x.map_rows(|r| 0.25 * r[0] + 0.75 * r[1]);
        let expected = cond_expectation(&agg, &h).unwrap().map(|v| -v);
        assert!(v.max_abs_diff(&expected) < 1e-14);
    }

    #[test]
    fn diagonal_examples() {
        let s = FiniteProbSpace::uniform(4).unwrap();
        let h = SigmaAlgebra::new(&s, vec![vec![0, 1], vec![2, 3]]).unwrap();
        let alpha = RandomVariable::new(&s, vec![0.5, 0.5, -1.5, -1.5]).unwrap();

        let ent = entropic(&s, 1.0, 2, &h);
        assert!(ent.f_rho(&alpha).unwrap().max_abs_diff(&alpha.map(|v| -v)) < 1e-13);
        let norm = ent.normalize();
        assert!(norm.f_rho(&alpha).unwrap().max_abs_diff(&alpha.map(|v| -v)) < 1e-11);

        let scaled = linear(&s, vec![0.5, 0.5], OuterMap::AffineNeg { a: 2.0, c: 0.0 }, &h);
        assert!(scaled.f_rho(&alpha).unwrap().max_abs_diff(&alpha.map(|v| -2.0 * v)) < 1e-13);

        // evaluation on a diagonal input agrees with f_rho
        assert_eq!(ent.eval(&alpha.diagonal(2)).unwrap(), ent.f_rho(&alpha).unwrap());

        let not_h = RandomVariable::new(&s, vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(ent.f_rho(&not_h), Err(Error::NotMeasurable("target")));
    }

    #[test]
    fn inverse_examples() {
        let s = FiniteProbSpace::uniform(4).unwrap();
        let h = SigmaAlgebra::new(&s, vec![vec![0, 1], vec![2, 3]]).unwrap();
        let beta = RandomVariable::new(&s, vec![0.3, 0.3, -2.0, -2.0]).unwrap();
        let ent = entropic(&s, 1.0, 1, &h);
        assert!(ent.f_rho_inverse(&beta, 1e-12).unwrap().max_abs_diff(&beta.map(|v| -v)) < 1e-11);
        assert!(ent.normalize().f_rho_inverse(&beta, 1e-12).unwrap().max_abs_diff(&beta.map(|v| -v)) < 1e-11);
        let aff = linear(&s, vec![1.0], OuterMap::AffineNeg { a: 2.0, c: 1.0 }, &h);
        let inv = aff.f_rho_inverse(&beta, 1e-12).unwrap();
        assert!(inv.max_abs_diff(&beta.map(|v| (1.0 - v) / 2.0)) < 1e-11);
    }

    #[test]
    fn normalize_affine_outer_gives_negative_certainty_equivalent() {
        let s = FiniteProbSpace::uniform(4).unwrap();
        let g = SigmaAlgebra::trivial(&s);
        let u = Utility::exponential(1.0, 0.0, 1.0, vec![0.5, 0.5]).unwrap();
        let rho = Crm::cert_equiv(u.clone(), OuterMap::AffineNeg { a: 2.0, c: 1.0 }, &SigmaAlgebra::discrete(&s), &g)
            .unwrap();
        let x = rows(&s, vec![vec![1.0, 0.0], vec![-1.0, 2.0], vec![0.5, 0.5], vec![0.0, -2.0]]);
        let ce = u.diag_inverse(x.map_rows(|r| u.eval(r)).expectation(), 1e-14).unwrap();
        let v = rho.normalize().eval(&x).unwrap();
        assert!(v.values().iter().all(|&y| (y + ce).abs() < 1e-11));
        let twice = rho.normalize().normalize().eval(&x).unwrap();
        assert!(twice.max_abs_diff(&v) < 1e-11);
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = FiniteProbSpace::uniform(4).unwrap();
        let h = SigmaAlgebra::new(&s, vec![vec![0, 1], vec![2, 3]]).unwrap();
        let u = Utility::linear(1.0, 0.0, vec![1.0]).unwrap();
        assert!(matches!(
            Crm::cert_equiv(u.clone(), OuterMap::Negation, &h, &SigmaAlgebra::discrete(&s)),
            Err(Error::AlgebraMismatch(_))
        ));
        let wobbly = OuterMap::StateWise {
            maps: vec![
                OuterMap::Negation,
                OuterMap::AffineNeg { a: 2.0, c: 0.0 },
                OuterMap::Negation,
                OuterMap::Negation,
            ],
        };
        assert!(matches!(
            Crm::cert_equiv(u.clone(), wobbly, &SigmaAlgebra::discrete(&s), &h),
            Err(Error::AlgebraMismatch(_))
        ));
        let rho = Crm::cert_equiv(u, OuterMap::Negation, &h, &SigmaAlgebra::trivial(&s)).unwrap();
        let not_t = rows(&s, vec![vec![0.0], vec![1.0], vec![2.0], vec![2.0]]);
        assert_eq!(rho.eval(&not_t), Err(Error::NotMeasurable("domain")));
        let wide = rows(&s, vec![vec![0.0, 0.0]; 4]);
        assert_eq!(rho.eval(&wide), Err(Error::DimMismatch { expected: 1, got: 2 }));
    }

    #[test]
    fn own_algebra_conditioning_is_statewise() {
        let s = FiniteProbSpace::uniform(3).unwrap();
        let f = SigmaAlgebra::discrete(&s);
        let u = Utility::exponential(2.0, 1.0, 0.7, vec![0.3, 0.7]).unwrap();
        let rho = Crm::cert_equiv(u.clone(), OuterMap::Negation, &f, &f).unwrap();
        let x = rows(&s, vec![vec![1.0, -1.0], vec![0.2, 0.4], vec![-2.0, 3.0]]);
        let v = rho.eval(&x).unwrap();
        for st in 0..3 {
            let expected = -u.diag_inverse(u.eval(x.row(st)), 1e-14).unwrap();
            assert!((v.get(st) - expected).abs() < 1e-13);
        }
    }

    #[test]
    fn entropic_closed_form_with_beta() {
        let s = FiniteProbSpace::shared(vec![0.2, 0.3, 0.5]).unwrap();
        let rho = entropic(&s, 2.5, 1, &SigmaAlgebra::trivial(&s));
        let vals = [0.4, -1.0, 1.3];
        let x = RandomVector::from_flat(&s, 1, vals.to_vec()).unwrap();
        let mgf: f64 = vals.iter().zip(s.probs()).map(|(v, p)| p * (-2.5 * v).exp()).sum();
        assert!((rho.eval(&x).unwrap().get(0) - mgf.ln() / 2.5).abs() < 1e-13);
    }

    #[test]
    fn antitonicity_suite() {
        let s = FiniteProbSpace::uniform(4).unwrap();
        let h = SigmaAlgebra::new(&s, vec![vec![0, 1], vec![2, 3]]).unwrap();
        assert!(check_strict_antitonicity(&entropic(&s, 1.0, 2, &h), 100, 1).passed());
        assert!(check_strict_antitonicity(&linear(&s, vec![0.5, 0.5], OuterMap::Negation, &h), 100, 1).passed());
        let c = Crm::constant(&SigmaAlgebra::discrete(&s), 2, 0.0);
        let r = check_strict_antitonicity(&c, 20, 1);
        assert_eq!(r.failure_count, 20);
        assert_eq!(r.failures[0].context, "strictness");
    }

    #[test]
    fn locality_suite() {
        let s = FiniteProbSpace::shared(vec![0.1, 0.2, 0.3, 0.15, 0.25]).unwrap();
        let h = SigmaAlgebra::new(&s, vec![vec![0, 4], vec![1], vec![2, 3]]).unwrap();
        let r = check_locality(&entropic(&s, 1.5, 3, &h), 100, 9);
        assert!(r.passed());
        assert_eq!(r.passes, 100);
    }

    #[test]
    fn law_invariance_suite() {
        let s = FiniteProbSpace::uniform(4).unwrap();
        let triv = SigmaAlgebra::trivial(&s);
        assert!(check_cond_law_invariance(&entropic(&s, 1.0, 2, &triv), 50, 3).passed());
        let sw = Crm::state_weighted(&s, 1);
        assert!(!check_cond_law_invariance(&sw, 50, 3).passed());
        let disc = SigmaAlgebra::discrete(&s);
        let own = entropic(&s, 1.0, 1, &disc);
        let r = check_cond_law_invariance(&own, 10, 3);
        assert!(r.passed());
        assert_eq!(r.skipped, 10);
    }

    #[test]
    fn normalization_and_inverse_suites() {
        let s = FiniteProbSpace::shared(vec![0.2, 0.3, 0.1, 0.4]).unwrap();
        let h = SigmaAlgebra::new(&s, vec![vec![0, 1], vec![2, 3]]).unwrap();
        let scaled = linear(&s, vec![0.5, 0.5], OuterMap::AffineNeg { a: 2.0, c: 0.5 }, &h);
        let ent = entropic(&s, 0.7, 2, &h);
        for rho in [&scaled, &ent] {
            let r = check_normalization(rho, 30, 4, 1e-8);
            assert!(r.passed() && r.max_residual < 1e-9, "{:?}", r.failures.first());
            assert!(check_inverse(rho, 30, 4, 1e-8).passed());
        }
        // the constant map is not invertible on its diagonal
        let c = Crm::constant(&SigmaAlgebra::discrete(&s), 2, 0.0);
        assert!(!check_inverse(&c, 5, 4, 1e-8).passed());
    }
}
