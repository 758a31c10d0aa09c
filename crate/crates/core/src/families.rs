//! Families `{ρ_{H,T}}` indexed by pairs of algebras `H ⊆ T`, their
//! builders (spatial, dynamic, backward certainty equivalents, policy) and
//! family-level consistency.

use crate::consistency::{definitional_trials, martingale_residual, recursion_trials, Quad};
use crate::crm::{Crm, OuterMap, EVAL_TOL, INNER_TOL};
use crate::error::{Error, Result};
use crate::probspace::{cond_expectation, same_space, FiniteProbSpace, RandomVariable, SigmaAlgebra, SpaceRef};
use crate::report::{CheckReport, Failure};
use crate::sampling::{measurable_variable, measurable_vector, trial_rng};
use crate::utility::Utility;

/// Largest state space the spatial builder will construct.
pub const STATE_CAP: usize = 4096;

#[derive(Debug, Clone)]
pub struct FamilyMember {
    pub h_name: String,
    pub t_name: String,
    pub h: SigmaAlgebra,
    pub t: SigmaAlgebra,
    pub crm: Crm,
}

#[derive(Debug, Clone)]
pub struct CrmFamily {
    space: SpaceRef,
    members: Vec<FamilyMember>,
    /// Representation utility attached to each domain algebra.
    utilities: Vec<(SigmaAlgebra, Utility)>,
}

impl CrmFamily {
    pub fn new(space: &SpaceRef, members: Vec<FamilyMember>, utilities: Vec<(SigmaAlgebra, Utility)>) -> Result<Self> {
        for m in &members {
            if !same_space(space, m.crm.space()) {
                return Err(Error::SpaceMismatch);
            }
            if m.crm.target() != &m.h || m.crm.domain() != &m.t {
                return Err(Error::AlgebraMismatch(format!(
                    "member ({}, {}) does not match its index pair",
                    m.h_name, m.t_name
                )));
            }
        }
        Ok(Self { space: space.clone(), members, utilities })
    }

    pub fn space(&self) -> &SpaceRef {
        &self.space
    }

    pub fn members(&self) -> &[FamilyMember] {
        &self.members
    }

    pub fn member(&self, h: &SigmaAlgebra, t: &SigmaAlgebra) -> Option<&FamilyMember> {
        self.members.iter().find(|m| &m.h == h && &m.t == t)
    }

    pub fn member_by_name(&self, h_name: &str, t_name: &str) -> Option<&FamilyMember> {
        self.members.iter().find(|m| m.h_name == h_name && m.t_name == t_name)
    }

    pub fn utility_for(&self, t: &SigmaAlgebra) -> Option<&Utility> {
        self.utilities.iter().find(|(alg, _)| alg == t).map(|(_, u)| u)
    }

    /// Applies `f` to every member's index names.
    pub fn rename(mut self, f: impl Fn(&str) -> String) -> Self {
        for m in &mut self.members {
            m.h_name = f(&m.h_name);
            m.t_name = f(&m.t_name);
        }
        self
    }

    pub fn has_trivial_index(&self) -> bool {
        self.members.iter().any(|m| m.h.is_trivial())
    }

    /// Member indices `(G,T₁), (H,T₁), (H,T₂), (G,T₂)` for every `G ⊊ H`
    /// with all four members present.
    pub fn quads(&self) -> Vec<[usize; 4]> {
        let ms = &self.members;
        let mut out = Vec::new();
        for (g1, a) in ms.iter().enumerate() {
            for (h1, b) in ms.iter().enumerate() {
                if a.t != b.t || a.h == b.h || !b.h.refines(&a.h).unwrap_or(false) {
                    continue;
                }
                for (h2, c) in ms.iter().enumerate() {
                    if c.h != b.h {
                        continue;
                    }
                    if let Some(g2) = ms.iter().position(|m| m.h == a.h && m.t == c.t) {
                        out.push([g1, h1, h2, g2]);
                    }
                }
            }
        }
        out
    }

    pub fn quad(&self, idx: [usize; 4]) -> Quad<'_> {
        Quad {
            g1: &self.members[idx[0]].crm,
            h1: &self.members[idx[1]].crm,
            h2: &self.members[idx[2]].crm,
            g2: &self.members[idx[3]].crm,
        }
    }

    pub fn quad_label(&self, idx: [usize; 4]) -> String {
        let (g, h) = (&self.members[idx[0]], &self.members[idx[1]]);
        format!("G={} H={} T1={} T2={}", g.h_name, h.h_name, g.t_name, self.members[idx[2]].t_name)
    }
}

fn subset_name(j: &[usize]) -> String {
    let inner: Vec<String> = j.iter().map(usize::to_string).collect();
    format!("F{{{}}}", inner.join(","))
}

/// Lexicographic coordinates of every state of `S^d`.
fn grid_states(s_size: usize, d: usize) -> Vec<Vec<usize>> {
    let n = s_size.pow(d as u32);
    (0..n)
        .map(|mut k| {
            let mut coords = vec![0; d];
            for c in coords.iter_mut().rev() {
                *c = k % s_size;
                k /= s_size;
            }
            coords
        })
        .collect()
}

/// Partition of `S^d` by the coordinates in `j`.
pub fn coordinate_algebra(space: &SpaceRef, s_size: usize, d: usize, j: &[usize]) -> Result<SigmaAlgebra> {
    let labels: Vec<Vec<usize>> =
        grid_states(s_size, d).into_iter().map(|c| j.iter().map(|&i| c[i]).collect()).collect();
    SigmaAlgebra::from_labels(space, &labels)
}

/// Spatial family on `Ω = S^d`: one member `ρ_J` per subset `J` of the
/// institutions, conditioning on `F_J`, all with domain `F_I`.
pub fn build_spatial_family(
    s_size: usize,
    d: usize,
    probs: Option<Vec<f64>>,
    u: &Utility,
    outer_rule: impl Fn(&[usize]) -> OuterMap,
) -> Result<CrmFamily> {
    if s_size < 2 || d == 0 {
        return Err(Error::Unsupported("need at least two local states and one institution".into()));
    }
    let size = u32::try_from(d)
        .ok()
        .and_then(|e| s_size.checked_pow(e))
        .ok_or(Error::SizeOverflow { size: usize::MAX, cap: STATE_CAP })?;
    if size > STATE_CAP {
        return Err(Error::SizeOverflow { size, cap: STATE_CAP });
    }
    let space = match probs {
        Some(p) => {
            if p.len() != size {
                return Err(Error::DimMismatch { expected: size, got: p.len() });
            }
            FiniteProbSpace::shared(p)?
        }
        None => FiniteProbSpace::uniform(size)?,
    };
    let full: Vec<usize> = (0..d).collect();
    let top = coordinate_algebra(&space, s_size, d, &full)?;
    let mut members = Vec::with_capacity(1 << d);
    for mask in 0..(1usize << d) {
        let j: Vec<usize> = (0..d).filter(|i| mask >> i & 1 == 1).collect();
        let h = coordinate_algebra(&space, s_size, d, &j)?;
        members.push(FamilyMember {
            h_name: subset_name(&j),
            t_name: subset_name(&full),
            crm: Crm::cert_equiv(u.clone(), outer_rule(&j), &top, &h)?,
            h,
            t: top.clone(),
        });
    }
    CrmFamily::new(&space, members, vec![(top, u.clone())])
}

fn check_filtration(filtration: &[SigmaAlgebra]) -> Result<()> {
    if filtration.is_empty() {
        return Err(Error::Unsupported("empty filtration".into()));
    }
    for k in 1..filtration.len() {
        if !filtration[k].refines(&filtration[k - 1])? {
            return Err(Error::NotAFiltration(k));
        }
    }
    Ok(())
}

/// `ρ_t = g_t(f_u⁻¹(E[u(X)|F_t]))` on the terminal algebra.
pub fn build_dynamic_family(
    filtration: &[SigmaAlgebra],
    u: &Utility,
    outer_rule: impl Fn(usize) -> OuterMap,
) -> Result<CrmFamily> {
    check_filtration(filtration)?;
    let last = filtration.len() - 1;
    let terminal = &filtration[last];
    let members = filtration
        .iter()
        .enumerate()
        .map(|(t, alg)| {
            Ok(FamilyMember {
                h_name: format!("F{t}"),
                t_name: format!("F{last}"),
                h: alg.clone(),
                t: terminal.clone(),
                crm: Crm::cert_equiv(u.clone(), outer_rule(t), terminal, alg)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    CrmFamily::new(terminal.space(), members, vec![(terminal.clone(), u.clone())])
}

/// Diagonal points probed when checking `R_t ⊆ R_s`.
fn range_probe() -> impl Iterator<Item = f64> {
    (0..=80).map(|k| -20.0 + 0.5 * k as f64)
}

/// Backward certainty equivalents `ρ_{s,t}(X) = −f_{u_s}⁻¹(E[u_t(X)|F_s])`
/// for every `s ≤ t`.
pub fn build_cce_family(filtration: &[SigmaAlgebra], utilities: &[Utility]) -> Result<CrmFamily> {
    check_filtration(filtration)?;
    if utilities.len() != filtration.len() {
        return Err(Error::DimMismatch { expected: filtration.len(), got: utilities.len() });
    }
    for (s, us) in utilities.iter().enumerate() {
        if us.dim() != utilities[0].dim() {
            return Err(Error::DimMismatch { expected: utilities[0].dim(), got: us.dim() });
        }
        for (t, ut) in utilities.iter().enumerate().skip(s + 1) {
            let nested = range_probe().all(|x| us.diag_inverse(ut.diag(x), INNER_TOL).is_ok_and(f64::is_finite));
            if !nested {
                return Err(Error::RangeNotNested { earlier: s, later: t });
            }
        }
    }
    let mut members = Vec::new();
    for (t, ft) in filtration.iter().enumerate() {
        for (s, fs) in filtration.iter().enumerate().take(t + 1) {
            members.push(FamilyMember {
                h_name: format!("F{s}"),
                t_name: format!("F{t}"),
                h: fs.clone(),
                t: ft.clone(),
                crm: Crm::backward_cert_equiv(utilities[t].clone(), utilities[s].clone(), ft, fs)?,
            });
        }
    }
    let reps = filtration.iter().cloned().zip(utilities.iter().cloned()).collect();
    CrmFamily::new(filtration[0].space(), members, reps)
}

/// `u_k = a_k·base + b_k` for each `(a_k, b_k)`.
pub fn affine_linked_utilities(base: &Utility, links: &[(f64, f64)]) -> Result<Vec<Utility>> {
    links.iter().map(|&(a, b)| base.affine(a, b)).collect()
}

/// Two-index family `ρ_{H,T} = g_H(f_{u_T}⁻¹(E[u_T(X)|H]))` over every
/// listed `H ⊆ T`; the outer map depends on `H` only.
pub fn build_policy_family(
    hs: &[(String, SigmaAlgebra)],
    ts: &[(String, SigmaAlgebra, Utility)],
    outer_rule: impl Fn(usize) -> OuterMap,
) -> Result<CrmFamily> {
    let space = ts
        .first()
        .map(|t| t.1.space().clone())
        .ok_or_else(|| Error::Unsupported("policy family needs at least one domain algebra".into()))?;
    let mut members = Vec::new();
    for (t_name, t, u) in ts {
        for (hi, (h_name, h)) in hs.iter().enumerate() {
            if !t.refines(h)? {
                continue;
            }
            members.push(FamilyMember {
                h_name: h_name.clone(),
                t_name: t_name.clone(),
                h: h.clone(),
                t: t.clone(),
                crm: Crm::cert_equiv(u.clone(), outer_rule(hi), t, h)?,
            });
        }
    }
    let reps = ts.iter().map(|(_, t, u)| (t.clone(), u.clone())).collect();
    CrmFamily::new(&space, members, reps)
}

/// Recursion identity and ordered-pair implication for every index quad.
pub fn check_family_consistency(fam: &CrmFamily, trials: usize, rng_seed: u64, tol: f64) -> CheckReport {
    let mut report = CheckReport::new("family_consistency");
    for idx in fam.quads() {
        let q = fam.quad(idx);
        let label = fam.quad_label(idx);
        report.absorb(recursion_trials(&q, trials, rng_seed, tol, &format!("recursion {label}")));
        report.absorb(definitional_trials(&q, trials, rng_seed, tol, &format!("definition {label}")));
    }
    report
}

/// Offset of the link on one conditioning algebra.
#[derive(Debug, Clone)]
pub struct LinkOffset {
    pub h_name: String,
    pub h: SigmaAlgebra,
    pub b: RandomVariable,
}

/// `f_{u_{T₂}}(f⁻¹_{ρ_{H,T₂}}(ρ_{H,T₁}(X))) = a·E[u_{T₁}(X)|H] + b_H`.
#[derive(Debug, Clone)]
pub struct AffineLink {
    pub a: f64,
    pub b: Vec<LinkOffset>,
    pub residual: f64,
    pub martingale_residual: f64,
}

/// Fits the affine link between the `T₁` and `T₂` members on `samples`
/// random inputs.
pub fn fit_intercons_link(
    fam: &CrmFamily,
    t1: &SigmaAlgebra,
    t2: &SigmaAlgebra,
    samples: usize,
    rng_seed: u64,
    tol: f64,
) -> Result<AffineLink> {
    let missing = || Error::Unsupported("both domain algebras need a representation utility".into());
    let u1 = fam.utility_for(t1).ok_or_else(missing)?;
    let u2 = fam.utility_for(t2).ok_or_else(missing)?;
    let shared: Vec<(&FamilyMember, &FamilyMember)> =
        fam.members().iter().filter(|m| &m.t == t1).filter_map(|m| fam.member(&m.h, t2).map(|o| (m, o))).collect();
    if shared.is_empty() {
        return Err(Error::Unsupported("no conditioning algebra is shared by the two domains".into()));
    }
    // points[i][block] collects (x, y) over samples
    let mut points: Vec<Vec<Vec<(f64, f64)>>> =
        shared.iter().map(|(m, _)| vec![Vec::new(); m.h.num_blocks()]).collect();
    let d = shared[0].0.crm.dim();
    for k in 0..samples {
        let mut rng = trial_rng(rng_seed, k);
        let x = measurable_vector(&mut rng, t1, d, -2.0, 2.0);
        let ux = x.map_rows(|r| u1.eval(r));
        for (i, (m1, m2)) in shared.iter().enumerate() {
            let cash = m2.crm.f_rho_inverse(&m1.crm.eval(&x)?, INNER_TOL)?;
            let ex = cond_expectation(&ux, &m1.h)?;
            for (b, block) in m1.h.blocks().iter().enumerate() {
                let rep = block[0];
                points[i][b].push((ex.get(rep), u2.diag(cash.get(rep))));
            }
        }
    }
    let means = |pts: &[(f64, f64)]| {
        let m = pts.len() as f64;
        (pts.iter().map(|p| p.0).sum::<f64>() / m, pts.iter().map(|p| p.1).sum::<f64>() / m)
    };
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for grp in points.iter().flatten() {
        let (mx, my) = means(grp);
        for &(x, y) in grp {
            sxx += (x - mx) * (x - mx);
            sxy += (x - mx) * (y - my);
        }
    }
    if !(sxx > 0.0) {
        return Err(Error::DegenerateFit("conditional expected utility does not vary".into()));
    }
    let a = sxy / sxx;
    let mut residual = 0.0_f64;
    let mut offsets = Vec::with_capacity(shared.len());
    for (i, (m1, _)) in shared.iter().enumerate() {
        let mut b_vals = vec![0.0; fam.space().len()];
        for (b, block) in m1.h.blocks().iter().enumerate() {
            let (mx, my) = means(&points[i][b]);
            let off = my - a * mx;
            for &(x, y) in &points[i][b] {
                residual = residual.max((y - a * x - off).abs());
            }
            for &s in block {
                b_vals[s] = off;
            }
        }
        offsets.push(LinkOffset {
            h_name: m1.h_name.clone(),
            h: m1.h.clone(),
            b: RandomVariable::new(fam.space(), b_vals)?,
        });
    }
    if !(a > 0.0) || residual > tol {
        return Err(Error::NonAffineRelation { residual });
    }
    let mut mart = 0.0_f64;
    for fine in &offsets {
        for coarse in &offsets {
            if fine.h != coarse.h && fine.h.refines(&coarse.h)? {
                mart = mart.max(martingale_residual(&fine.b, &coarse.b, &coarse.h)?);
            }
        }
    }
    if mart > tol {
        return Err(Error::MartingaleViolation { residual: mart });
    }
    Ok(AffineLink { a, b: offsets, residual, martingale_residual: mart })
}

/// `f_u⁻¹(E[u(X)|G])` exists for random `H`-measurable `X`.
pub fn check_range_lemma(
    u: &Utility,
    h: &SigmaAlgebra,
    g: &SigmaAlgebra,
    trials: usize,
    rng_seed: u64,
) -> Result<CheckReport> {
    if !h.refines(g)? {
        return Err(Error::AlgebraMismatch("G is not contained in H".into()));
    }
    let mut report = CheckReport::new("range_lemma");
    for k in 0..trials {
        let mut rng = trial_rng(rng_seed, k);
        let x = measurable_vector(&mut rng, h, u.dim(), -2.0, 2.0);
        let z = cond_expectation(&x.map_rows(|r| u.eval(r)), g)?;
        let mut worst = 0.0_f64;
        let mut err = None;
        for &v in z.values() {
            match u.diag_inverse(v, INNER_TOL) {
                Ok(t) => worst = worst.max((u.diag(t) - v).abs() / v.abs().max(1.0)),
                Err(e) => err = Some(e),
            }
        }
        match err {
            Some(e) => report.fail(f64::INFINITY, Failure::from_error(k, "range", &e).with("X", x.values())),
            None => report.record(worst <= EVAL_TOL, worst, || {
                Failure::new(k, "range").with("X", x.values()).observed(z.values())
            }),
        }
    }
    Ok(report)
}

/// For fixed `H`, diagonal values of `ρ_{H,T₁}` lie in the image of `f_{ρ_{H,T₂}}`.
pub fn check_image_agreement(fam: &CrmFamily, trials: usize, rng_seed: u64) -> CheckReport {
    let mut report = CheckReport::new("image_agreement");
    for m1 in fam.members() {
        for m2 in fam.members().iter().filter(|m| m.h == m1.h && m.t != m1.t) {
            let context = format!("H={} T1={} T2={}", m1.h_name, m1.t_name, m2.t_name);
            for k in 0..trials {
                let mut rng = trial_rng(rng_seed, k);
                let alpha = measurable_variable(&mut rng, &m1.h, -2.0, 2.0);
                let outcome = (|| {
                    let v = m1.crm.f_rho(&alpha)?;
                    let back = m2.crm.f_rho(&m2.crm.f_rho_inverse(&v, INNER_TOL)?)?;
                    Ok::<_, Error>((v, back))
                })();
                match outcome {
                    Ok((v, back)) => {
                        let r = v.max_abs_diff(&back);
                        report.record(r <= EVAL_TOL, r, || {
                            Failure::new(k, context.clone())
                                .with("alpha", alpha.values())
                                .observed(back.values())
                                .expected(v.values())
                        });
                    }
                    Err(e) => report.fail(f64::INFINITY, Failure::from_error(k, context.clone(), &e)),
                }
            }
        }
    }
    report
}
