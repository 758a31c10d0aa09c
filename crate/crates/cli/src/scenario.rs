//! Scenario file schema and parsing.

use std::fmt;
use std::marker::PhantomData;
use std::path::Path;

use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use strongcons::{OuterMap, Utility};

use crate::error::CliError;

pub const FORMAT_VERSION: u32 = 1;

/// JSON object whose key order is kept; keys are the names later entries
/// refer to.
#[derive(Debug, Clone, PartialEq)]
pub struct Named<T>(pub Vec<(String, T)>);

impl<T> Default for Named<T> {
    fn default() -> Self {
        Self(Vec::new())
    }
}

impl<T> Named<T> {
    pub fn iter(&self) -> impl Iterator<Item = &(String, T)> {
        self.0.iter()
    }

    pub fn get(&self, key: &str) -> Option<&T> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }
}

impl<T: Serialize> Serialize for Named<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for Named<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V<T>(PhantomData<T>);
        impl<'de, T: Deserialize<'de>> Visitor<'de> for V<T> {
            type Value = Named<T>;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object of named entries")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Self::Value, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, T>()? {
                    out.push((k, v));
                }
                Ok(Named(out))
            }
        }
        d.deserialize_map(V(PhantomData))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub format_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub space: SpaceSpec,
    #[serde(default)]
    pub algebras: Named<AlgebraSpec>,
    #[serde(default)]
    pub utilities: Named<UtilitySpec>,
    #[serde(default)]
    pub families: Named<FamilySpec>,
    #[serde(default)]
    pub crms: Named<CrmSpec>,
    #[serde(default)]
    pub checks: Vec<CheckSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpaceSpec {
    Probs {
        probs: Vec<f64>,
    },
    Uniform {
        states: usize,
    },
    /// Independent product; state `(i, j)` has index `i·|second| + j`.
    Product {
        first: Vec<f64>,
        second: Vec<f64>,
    },
    /// `S^d` with `local_states = |S|` and `institutions = d`.
    Grid {
        local_states: usize,
        institutions: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        probs: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factor {
    First,
    Second,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlgebraSpec {
    Trivial,
    Discrete,
    Blocks {
        blocks: Vec<Vec<usize>>,
    },
    Labels {
        labels: Vec<i64>,
    },
    /// Grid spaces only: states agreeing on these coordinates.
    Coordinates {
        coords: Vec<usize>,
    },
    /// Product spaces only: generated by one factor.
    Factor {
        which: Factor,
    },
    Join {
        of: Vec<String>,
    },
    Meet {
        of: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DerivedUtility {
    /// `scale·base + shift`.
    AffineOf { base: String, scale: f64, shift: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum UtilitySpec {
    Derived(DerivedUtility),
    Direct(Utility),
}

/// Outer map per conditioning index, falling back to `default`
/// (negation when absent).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OuterRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<OuterMap>,
    #[serde(default, skip_serializing_if = "is_empty")]
    pub by_index: Named<OuterMap>,
}

fn is_empty<T>(n: &Named<T>) -> bool {
    n.0.is_empty()
}

impl OuterRule {
    pub fn for_index(&self, name: &str) -> OuterMap {
        self.by_index.get(name).or(self.default.as_ref()).cloned().unwrap_or(OuterMap::Negation)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyDomain {
    pub algebra: String,
    pub utility: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilySpec {
    /// Grid spaces only; members are named `F{..}` by institution subset.
    Spatial {
        utility: String,
        #[serde(default)]
        outer: OuterRule,
    },
    Dynamic {
        filtration: Vec<String>,
        utility: String,
        #[serde(default)]
        outer: OuterRule,
    },
    Cce {
        filtration: Vec<String>,
        utilities: Vec<String>,
    },
    Policy {
        conditioning: Vec<String>,
        domains: Vec<PolicyDomain>,
        #[serde(default)]
        outer: OuterRule,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CrmSpec {
    CertEquiv {
        utility: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        outer: Option<OuterMap>,
        domain: String,
        target: String,
    },
    BackwardCertEquiv {
        inner: String,
        outer_utility: String,
        domain: String,
        target: String,
    },
    Normalized {
        of: String,
    },
    NegatedAggregation {
        of: String,
    },
    Constant {
        domain: String,
        dim: usize,
        value: f64,
    },
    StateWeighted {
        dim: usize,
    },
    MixedUtility {
        utilities: Vec<String>,
        mix: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        outer: Option<OuterMap>,
        domain: String,
    },
    /// Member `(h, t)` of a family, by member names.
    Member {
        family: String,
        h: String,
        t: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    StrictAntitonicity,
    Locality,
    CondLawInvariance,
    Normalization,
    Inverse,
    ConsistencyRecursive,
    ConsistencyDefinitional,
    RiskAntitonicity,
    Decomposition,
    AggregationConsistency,
    Classify,
    FamilyConsistency,
    ImageAgreement,
    InterconsLink,
    RangeLemma,
}

impl CheckKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::StrictAntitonicity => "strict_antitonicity",
            Self::Locality => "locality",
            Self::CondLawInvariance => "cond_law_invariance",
            Self::Normalization => "normalization",
            Self::Inverse => "inverse",
            Self::ConsistencyRecursive => "consistency_recursive",
            Self::ConsistencyDefinitional => "consistency_definitional",
            Self::RiskAntitonicity => "risk_antitonicity",
            Self::Decomposition => "decomposition",
            Self::AggregationConsistency => "aggregation_consistency",
            Self::Classify => "classify",
            Self::FamilyConsistency => "family_consistency",
            Self::ImageAgreement => "image_agreement",
            Self::InterconsLink => "intercons_link",
            Self::RangeLemma => "range_lemma",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Subject {
    One(String),
    Many(Vec<String>),
}

impl Subject {
    pub fn names(&self) -> Vec<String> {
        match self {
            Self::One(s) => vec![s.clone()],
            Self::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expect {
    #[default]
    Pass,
    Fail,
}

/// Extra expectations for checks that estimate quantities.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckParams {
    /// `classify`: `linear`, `entropic` or `neither`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<String>,
    /// `classify`: expected risk aversion.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// `intercons_link`: expected scale.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    /// `intercons_link`: expected constant offset on every conditioning algebra.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
}

pub const DEFAULT_TRIALS: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    pub name: CheckKind,
    pub subject: Subject,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default)]
    pub expect: Expect,
    #[serde(default, skip_serializing_if = "is_default_params")]
    pub params: CheckParams,
}

fn is_default_params(p: &CheckParams) -> bool {
    *p == CheckParams::default()
}

/// Parsed scenario with the SHA-256 of its source text.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub scenario: Scenario,
    pub digest: String,
}

pub fn digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

pub fn parse_str(text: &str) -> Result<Loaded, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let (line, column) = (inner.line(), inner.column());
        let full = inner.to_string();
        let message = full.strip_suffix(&format!(" at line {line} column {column}")).unwrap_or(&full).to_string();
        CliError::Parse { line, column, path, message }
    })?;
    if scenario.format_version != FORMAT_VERSION {
        return Err(CliError::Validation {
            path: "format_version".into(),
            message: format!("unsupported format version {}, expected {FORMAT_VERSION}", scenario.format_version),
        });
    }
    Ok(Loaded { scenario, digest: digest(text) })
}

pub fn parse_scenario(path: &Path) -> Result<Loaded, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io { path: path.display().to_string(), message: e.to_string() })?;
    parse_str(&text)
}
