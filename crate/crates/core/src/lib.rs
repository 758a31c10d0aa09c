//! Numerical engine for strongly consistent multivariate conditional risk
//! measures on finite probability spaces.

// `!(x > 0.0)` is used on purpose so that NaN fails positivity checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod consistency;
pub mod crm;
pub mod error;
pub mod families;
pub mod probspace;
pub mod report;
pub mod roots;
pub mod sampling;
pub mod utility;

pub use crm::{make_cert_equiv, Crm, Evaluator, OuterMap};
pub use error::{Error, Result};
pub use families::{
    build_cce_family, build_dynamic_family, build_policy_family, build_spatial_family, check_family_consistency,
    fit_intercons_link, AffineLink, CrmFamily, FamilyMember,
};
pub use probspace::{
    cond_expectation, cond_law_equal, is_independent, product_space, FiniteProbSpace, ProductSpace, RandomVariable,
    RandomVector, SigmaAlgebra, SpaceRef, EPS,
};
pub use report::{CheckReport, Failure};
pub use utility::{PiecewiseLinear, ScalarMap, StochasticUtility, Utility};
