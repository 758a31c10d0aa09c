//! Resolves a scenario's named declarations into engine objects.

use strongcons::families::{coordinate_algebra, STATE_CAP};
use strongcons::{
    build_cce_family, build_dynamic_family, build_policy_family, build_spatial_family, product_space, Crm, CrmFamily,
    FiniteProbSpace, OuterMap, SigmaAlgebra, SpaceRef, Utility,
};

use crate::error::CliError;
use crate::scenario::{
    AlgebraSpec, CrmSpec, DerivedUtility, Factor, FamilySpec, Named, Scenario, SpaceSpec, UtilitySpec,
};

#[derive(Debug, Clone)]
pub struct Built {
    pub space: SpaceRef,
    pub algebras: Vec<(String, SigmaAlgebra)>,
    pub utilities: Vec<(String, Utility)>,
    pub families: Vec<(String, CrmFamily)>,
    pub crms: Vec<(String, Crm)>,
}

fn lookup<'a, T>(items: &'a [(String, T)], name: &str, what: &str, path: &str) -> Result<&'a T, CliError> {
    items
        .iter()
        .find(|(k, _)| k == name)
        .map(|(_, v)| v)
        .ok_or_else(|| CliError::invalid(path, format!("unknown {what} \"{name}\"")))
}

impl Built {
    pub fn algebra(&self, name: &str, path: &str) -> Result<&SigmaAlgebra, CliError> {
        lookup(&self.algebras, name, "algebra", path)
    }

    pub fn utility(&self, name: &str, path: &str) -> Result<&Utility, CliError> {
        lookup(&self.utilities, name, "utility", path)
    }

    pub fn family(&self, name: &str, path: &str) -> Result<&CrmFamily, CliError> {
        lookup(&self.families, name, "family", path)
    }

    pub fn crm(&self, name: &str, path: &str) -> Result<&Crm, CliError> {
        lookup(&self.crms, name, "crm", path)
    }
}

fn reject_duplicates<T>(items: &Named<T>, section: &str) -> Result<(), CliError> {
    for (i, (name, _)) in items.iter().enumerate() {
        if items.0[..i].iter().any(|(k, _)| k == name) {
            return Err(CliError::invalid(format!("{section}.{name}"), "duplicate name"));
        }
    }
    Ok(())
}

enum Layout {
    Plain,
    Grid { local_states: usize, institutions: usize, probs: Option<Vec<f64>> },
    Product { first: SigmaAlgebra, second: SigmaAlgebra },
}

fn build_space(spec: &SpaceSpec) -> Result<(SpaceRef, Layout), CliError> {
    let err = |e: strongcons::Error| CliError::invalid("space", e);
    Ok(match spec {
        SpaceSpec::Probs { probs } => (FiniteProbSpace::shared(probs.clone()).map_err(err)?, Layout::Plain),
        SpaceSpec::Uniform { states } => (FiniteProbSpace::uniform(*states).map_err(err)?, Layout::Plain),
        SpaceSpec::Product { first, second } => {
            let a = FiniteProbSpace::new(first.clone()).map_err(|e| CliError::invalid("space.first", e))?;
            let b = FiniteProbSpace::new(second.clone()).map_err(|e| CliError::invalid("space.second", e))?;
            let p = product_space(&a, &b).map_err(err)?;
            (p.space.clone(), Layout::Product { first: p.first, second: p.second })
        }
        SpaceSpec::Grid { local_states, institutions, probs } => {
            if *local_states < 2 || *institutions == 0 {
                return Err(CliError::invalid("space", "a grid needs at least two local states and one institution"));
            }
            let size = u32::try_from(*institutions).ok().and_then(|d| local_states.checked_pow(d));
            let size = match size {
                Some(n) if n <= STATE_CAP => n,
                other => {
                    let size = other.unwrap_or(usize::MAX);
                    return Err(err(strongcons::Error::SizeOverflow { size, cap: STATE_CAP }));
                }
            };
            let space = match probs {
                Some(p) => FiniteProbSpace::shared(p.clone()).map_err(err)?,
                None => FiniteProbSpace::uniform(size).map_err(err)?,
            };
            if space.len() != size {
                return Err(CliError::invalid(
                    "space.probs",
                    format!("expected {size} probabilities, got {}", space.len()),
                ));
            }
            let layout =
                Layout::Grid { local_states: *local_states, institutions: *institutions, probs: probs.clone() };
            (space, layout)
        }
    })
}

fn build_algebra(
    spec: &AlgebraSpec,
    space: &SpaceRef,
    layout: &Layout,
    known: &[(String, SigmaAlgebra)],
    path: &str,
) -> Result<SigmaAlgebra, CliError> {
    let err = |e: strongcons::Error| CliError::invalid(path, e);
    let pair = |of: &Vec<String>| -> Result<(SigmaAlgebra, SigmaAlgebra), CliError> {
        if of.len() != 2 {
            return Err(CliError::invalid(format!("{path}.of"), "expected exactly two algebra names"));
        }
        let a = lookup(known, &of[0], "algebra", &format!("{path}.of[0]"))?;
        let b = lookup(known, &of[1], "algebra", &format!("{path}.of[1]"))?;
        Ok((a.clone(), b.clone()))
    };
    match spec {
        AlgebraSpec::Trivial => Ok(SigmaAlgebra::trivial(space)),
        AlgebraSpec::Discrete => Ok(SigmaAlgebra::discrete(space)),
        AlgebraSpec::Blocks { blocks } => SigmaAlgebra::new(space, blocks.clone()).map_err(err),
        AlgebraSpec::Labels { labels } => {
            if labels.len() != space.len() {
                return Err(CliError::invalid(
                    format!("{path}.labels"),
                    format!("expected {} labels, got {}", space.len(), labels.len()),
                ));
            }
            SigmaAlgebra::from_labels(space, labels).map_err(err)
        }
        AlgebraSpec::Coordinates { coords } => match layout {
            Layout::Grid { local_states, institutions, .. } => {
                if let Some(c) = coords.iter().find(|&&c| c >= *institutions) {
                    return Err(CliError::invalid(format!("{path}.coords"), format!("no institution {c}")));
                }
                coordinate_algebra(space, *local_states, *institutions, coords).map_err(err)
            }
            _ => Err(CliError::invalid(path, "coordinate algebras need a grid space")),
        },
        AlgebraSpec::Factor { which } => match layout {
            Layout::Product { first, second } => Ok(match which {
                Factor::First => first.clone(),
                Factor::Second => second.clone(),
            }),
            _ => Err(CliError::invalid(path, "factor algebras need a product space")),
        },
        AlgebraSpec::Join { of } => {
            let (a, b) = pair(of)?;
            a.join(&b).map_err(err)
        }
        AlgebraSpec::Meet { of } => {
            let (a, b) = pair(of)?;
            a.meet(&b).map_err(err)
        }
    }
}

fn names_to_algebras(built: &Built, names: &[String], path: &str) -> Result<Vec<SigmaAlgebra>, CliError> {
    names.iter().enumerate().map(|(i, n)| built.algebra(n, &format!("{path}[{i}]")).cloned()).collect()
}

/// Maps builder index names `F<k>` back to the scenario's algebra names.
fn positional_names(names: Vec<String>) -> impl Fn(&str) -> String {
    move |s: &str| {
        s.strip_prefix('F')
            .and_then(|k| k.parse::<usize>().ok())
            .and_then(|k| names.get(k).cloned())
            .unwrap_or_else(|| s.to_string())
    }
}

fn build_family(spec: &FamilySpec, built: &Built, layout: &Layout, path: &str) -> Result<CrmFamily, CliError> {
    let err = |e: strongcons::Error| CliError::invalid(path, e);
    match spec {
        FamilySpec::Spatial { utility, outer } => {
            let Layout::Grid { local_states, institutions, probs } = layout else {
                return Err(CliError::invalid(path, "spatial families need a grid space"));
            };
            let u = built.utility(utility, &format!("{path}.utility"))?;
            build_spatial_family(*local_states, *institutions, probs.clone(), u, |j| {
                let inner: Vec<String> = j.iter().map(usize::to_string).collect();
                outer.for_index(&format!("F{{{}}}", inner.join(",")))
            })
            .map_err(err)
        }
        FamilySpec::Dynamic { filtration, utility, outer } => {
            let algs = names_to_algebras(built, filtration, &format!("{path}.filtration"))?;
            let u = built.utility(utility, &format!("{path}.utility"))?;
            let fam = build_dynamic_family(&algs, u, |t| outer.for_index(&filtration[t])).map_err(err)?;
            Ok(fam.rename(positional_names(filtration.clone())))
        }
        FamilySpec::Cce { filtration, utilities } => {
            let algs = names_to_algebras(built, filtration, &format!("{path}.filtration"))?;
            let us = utilities
                .iter()
                .enumerate()
                .map(|(i, n)| built.utility(n, &format!("{path}.utilities[{i}]")).cloned())
                .collect::<Result<Vec<_>, _>>()?;
            let fam = build_cce_family(&algs, &us).map_err(err)?;
            Ok(fam.rename(positional_names(filtration.clone())))
        }
        FamilySpec::Policy { conditioning, domains, outer } => {
            let hs = names_to_algebras(built, conditioning, &format!("{path}.conditioning"))?;
            let hs: Vec<(String, SigmaAlgebra)> = conditioning.iter().cloned().zip(hs).collect();
            let ts = domains
                .iter()
                .enumerate()
                .map(|(i, d)| {
                    let p = format!("{path}.domains[{i}]");
                    let t = built.algebra(&d.algebra, &format!("{p}.algebra"))?.clone();
                    let u = built.utility(&d.utility, &format!("{p}.utility"))?.clone();
                    Ok((d.algebra.clone(), t, u))
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            build_policy_family(&hs, &ts, |h| outer.for_index(&conditioning[h])).map_err(err)
        }
    }
}

fn build_crm(spec: &CrmSpec, built: &Built, crms: &[(String, Crm)], path: &str) -> Result<Crm, CliError> {
    let err = |e: strongcons::Error| CliError::invalid(path, e);
    let alg = |name: &str, key: &str| built.algebra(name, &format!("{path}.{key}"));
    let util = |name: &str, key: &str| built.utility(name, &format!("{path}.{key}"));
    match spec {
        CrmSpec::CertEquiv { utility, outer, domain, target } => Crm::cert_equiv(
            util(utility, "utility")?.clone(),
            outer.clone().unwrap_or(OuterMap::Negation),
            alg(domain, "domain")?,
            alg(target, "target")?,
        )
        .map_err(err),
        CrmSpec::BackwardCertEquiv { inner, outer_utility, domain, target } => Crm::backward_cert_equiv(
            util(inner, "inner")?.clone(),
            util(outer_utility, "outer_utility")?.clone(),
            alg(domain, "domain")?,
            alg(target, "target")?,
        )
        .map_err(err),
        CrmSpec::Normalized { of } => Ok(lookup(crms, of, "crm", &format!("{path}.of"))?.normalize()),
        CrmSpec::NegatedAggregation { of } => Ok(lookup(crms, of, "crm", &format!("{path}.of"))?.negated_aggregation()),
        CrmSpec::Constant { domain, dim, value } => Ok(Crm::constant(alg(domain, "domain")?, *dim, *value)),
        CrmSpec::StateWeighted { dim } => Ok(Crm::state_weighted(&built.space, *dim)),
        CrmSpec::MixedUtility { utilities, mix, outer, domain } => {
            let us = utilities
                .iter()
                .enumerate()
                .map(|(i, n)| util(n, &format!("utilities[{i}]")).cloned())
                .collect::<Result<Vec<_>, _>>()?;
            Crm::mixed_utility(
                us,
                alg(mix, "mix")?,
                outer.clone().unwrap_or(OuterMap::Negation),
                alg(domain, "domain")?,
            )
            .map_err(err)
        }
        CrmSpec::Member { family, h, t } => {
            let fam = built.family(family, &format!("{path}.family"))?;
            fam.member_by_name(h, t)
                .map(|m| m.crm.clone())
                .ok_or_else(|| CliError::invalid(path, format!("family \"{family}\" has no member ({h}, {t})")))
        }
    }
}

/// Builds the entries of one section, each after the same-section names it
/// refers to, whatever the key order in the file. The result keeps
/// declaration order.
fn resolve<S, T>(
    entries: &Named<S>,
    section: &str,
    deps: impl Fn(&S) -> Vec<&String>,
    mut make: impl FnMut(&S, &[(String, T)], &str) -> Result<T, CliError>,
) -> Result<Vec<(String, T)>, CliError> {
    let declared = |n: &String| entries.iter().any(|(k, _)| k == n);
    let mut done: Vec<(String, T)> = Vec::new();
    let mut pending: Vec<usize> = (0..entries.0.len()).collect();
    while !pending.is_empty() {
        let before = pending.len();
        let mut still = Vec::new();
        for i in pending {
            let (name, spec) = &entries.0[i];
            let ready = deps(spec).into_iter().all(|d| !declared(d) || done.iter().any(|(k, _)| k == d));
            if ready {
                let value = make(spec, &done, &format!("{section}.{name}"))?;
                done.push((name.clone(), value));
            } else {
                still.push(i);
            }
        }
        if still.len() == before {
            let name = &entries.0[still[0]].0;
            return Err(CliError::invalid(format!("{section}.{name}"), "circular reference"));
        }
        pending = still;
    }
    let mut ordered = Vec::with_capacity(done.len());
    for (name, _) in entries.iter() {
        let at = done.iter().position(|(k, _)| k == name).expect("every entry was resolved");
        ordered.push(done.swap_remove(at));
    }
    Ok(ordered)
}

fn build_utility(spec: &UtilitySpec, known: &[(String, Utility)], path: &str) -> Result<Utility, CliError> {
    match spec {
        UtilitySpec::Direct(u) => {
            u.validate().map_err(|e| CliError::invalid(path, e))?;
            Ok(u.clone())
        }
        UtilitySpec::Derived(DerivedUtility::AffineOf { base, scale, shift }) => {
            lookup(known, base, "utility", &format!("{path}.base"))?
                .affine(*scale, *shift)
                .map_err(|e| CliError::invalid(path, e))
        }
    }
}

pub fn build(scenario: &Scenario) -> Result<Built, CliError> {
    reject_duplicates(&scenario.algebras, "algebras")?;
    reject_duplicates(&scenario.utilities, "utilities")?;
    reject_duplicates(&scenario.families, "families")?;
    reject_duplicates(&scenario.crms, "crms")?;

    let (space, layout) = build_space(&scenario.space)?;
    let mut built = Built {
        space: space.clone(),
        algebras: Vec::new(),
        utilities: Vec::new(),
        families: Vec::new(),
        crms: Vec::new(),
    };

    built.algebras = resolve(
        &scenario.algebras,
        "algebras",
        |spec| match spec {
            AlgebraSpec::Join { of } | AlgebraSpec::Meet { of } => of.iter().collect(),
            _ => Vec::new(),
        },
        |spec, known, path| build_algebra(spec, &space, &layout, known, path),
    )?;
    built.utilities = resolve(
        &scenario.utilities,
        "utilities",
        |spec| match spec {
            UtilitySpec::Derived(DerivedUtility::AffineOf { base, .. }) => vec![base],
            UtilitySpec::Direct(_) => Vec::new(),
        },
        build_utility,
    )?;
    for (name, spec) in scenario.families.iter() {
        let fam = build_family(spec, &built, &layout, &format!("families.{name}"))?;
        built.families.push((name.clone(), fam));
    }
    let crms = resolve(
        &scenario.crms,
        "crms",
        |spec| match spec {
            CrmSpec::Normalized { of } | CrmSpec::NegatedAggregation { of } => vec![of],
            _ => Vec::new(),
        },
        |spec, known, path| build_crm(spec, &built, known, path),
    )?;
    built.crms = crms;
    Ok(built)
}
