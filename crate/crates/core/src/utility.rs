//! Multivariate utilities `u: ℝᵈ → ℝ`, their diagonals `f_u(t) = u(t·𝟙_d)`,
//! and state-dependent scalar utilities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probspace::{RandomVariable, SpaceRef};
use crate::roots::invert_increasing;

const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Strictly increasing piecewise-linear map with linear extrapolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinear {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        let table = Self { xs, ys };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<()> {
        if self.xs.len() < 2 || self.xs.len() != self.ys.len() {
            return Err(Error::InvalidUtility("a table needs at least two knots with matching x and y".into()));
        }
        if self.xs.iter().chain(&self.ys).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("piecewise-linear table"));
        }
        let increasing = |v: &[f64]| v.windows(2).all(|w| w[1] > w[0]);
        if !increasing(&self.xs) || !increasing(&self.ys) {
            return Err(Error::InvalidUtility("table knots must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn identity() -> Self {
        Self { xs: vec![0.0, 1.0], ys: vec![0.0, 1.0] }
    }

    /// Samples `f` at `n` equispaced knots on `[lo, hi]`.
    pub fn tabulate(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> Result<Self> {
        let n = n.max(2);
        let xs: Vec<f64> = (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect();
        let ys = xs.iter().map(|&x| f(x)).collect();
        Self::new(xs, ys)
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.xs, &self.ys)
    }

    fn interp(xs: &[f64], ys: &[f64], t: f64) -> f64 {
        let n = xs.len();
        let k = match xs.partition_point(|&x| x <= t) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let slope = (ys[k + 1] - ys[k]) / (xs[k + 1] - xs[k]);
        ys[k] + slope * (t - xs[k])
    }

    pub fn eval(&self, t: f64) -> f64 {
        Self::interp(&self.xs, &self.ys, t)
    }

    /// Exact inverse; the table is a bijection of ℝ.
    pub fn inverse(&self, y: f64) -> f64 {
        Self::interp(&self.ys, &self.xs, y)
    }

    pub fn affine(&self, scale: f64, shift: f64) -> Self {
        Self { xs: self.xs.clone(), ys: self.ys.iter().map(|y| scale * y + shift).collect() }
    }
}

/// Closed catalog of strictly increasing continuous utilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Utility {
    /// `u(x) = a·Σ wᵢxᵢ + b`.
    LinearWeighted { a: f64, b: f64, weights: Vec<f64> },
    /// `u(x) = −a·exp(−β·Σ wᵢxᵢ) + b`.
    ExponentialWeighted { a: f64, b: f64, beta: f64, weights: Vec<f64> },
    /// `u(x) = Σ uᵢ(xᵢ)`.
    SumOfUnivariate { maps: Vec<PiecewiseLinear> },
}

fn check_weights(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::InvalidUtility("weights must be non-empty".into()));
    }
    if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
        return Err(Error::InvalidUtility("weights must be strictly positive".into()));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::InvalidUtility(format!("weights sum to {sum}, expected 1")));
    }
    Ok(())
}

fn weighted(weights: &[f64], x: &[f64]) -> f64 {
    weights.iter().zip(x).map(|(w, v)| w * v).sum()
}

impl Utility {
    pub fn linear(a: f64, b: f64, weights: Vec<f64>) -> Result<Self> {
        let u = Self::LinearWeighted { a, b, weights };
        u.validate()?;
        Ok(u)
    }

    pub fn exponential(a: f64, b: f64, beta: f64, weights: Vec<f64>) -> Result<Self> {
        let u = Self::ExponentialWeighted { a, b, beta, weights };
        u.validate()?;
        Ok(u)
    }

    pub fn sum_of(maps: Vec<PiecewiseLinear>) -> Result<Self> {
        let u = Self::SumOfUnivariate { maps };
        u.validate()?;
        Ok(u)
    }

    /// Uniform weights `1/d`.
    pub fn equal_weights(d: usize) -> Vec<f64> {
        vec![1.0 / d as f64; d]
    }

    /// Re-checks the invariants, e.g. after deserialization.
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::LinearWeighted { a, b, weights } => {
                if !(*a > 0.0) || !a.is_finite() || !b.is_finite() {
                    return Err(Error::InvalidUtility("need a > 0 and finite b".into()));
                }
                check_weights(weights)
            }
            Self::ExponentialWeighted { a, b, beta, weights } => {
                if !(*a > 0.0) || !(*beta > 0.0) || !a.is_finite() || !b.is_finite() || !beta.is_finite() {
                    return Err(Error::InvalidUtility("need a > 0, beta > 0 and finite b".into()));
                }
                check_weights(weights)
            }
            Self::SumOfUnivariate { maps } => {
                if maps.is_empty() {
                    return Err(Error::InvalidUtility("need at least one component map".into()));
                }
                maps.iter().try_for_each(PiecewiseLinear::validate)
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::LinearWeighted { weights, .. } | Self::ExponentialWeighted { weights, .. } => weights.len(),
            Self::SumOfUnivariate { maps } => maps.len(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        match self {
            Self::LinearWeighted { a, b, weights } => a * weighted(weights, x) + b,
            Self::ExponentialWeighted { a, b, beta, weights } => -a * (-beta * weighted(weights, x)).exp() + b,
            Self::SumOfUnivariate { maps } => maps.iter().zip(x).map(|(m, &v)| m.eval(v)).sum(),
        }
    }

    /// The diagonal `f_u(t) = u(t·𝟙_d)`.
    pub fn diag(&self, t: f64) -> f64 {
        match self {
            Self::LinearWeighted { a, b, .. } => a * t + b,
            Self::ExponentialWeighted { a, b, beta, .. } => -a * (-beta * t).exp() + b,
            Self::SumOfUnivariate { maps } => maps.iter().map(|m| m.eval(t)).sum(),
        }
    }

    /// `f_u⁻¹(y)`: closed form for the parametric kinds, bisection otherwise.
    pub fn diag_inverse(&self, y: f64, tol: f64) -> Result<f64> {
        match self {
            Self::LinearWeighted { a, b, .. } => Ok((y - b) / a),
            Self::ExponentialWeighted { a, b, beta, .. } => {
                let gap = (b - y) / a;
                if !(gap > 0.0) || !gap.is_finite() {
                    return Err(Error::OutOfRange { value: y });
                }
                Ok(-gap.ln() / beta)
            }
            Self::SumOfUnivariate { .. } => self.diag_inverse_bisect(y, tol),
        }
    }

    /// `f_u⁻¹(y)` by bracketed bisection regardless of kind.
    pub fn diag_inverse_bisect(&self, y: f64, tol: f64) -> Result<f64> {
        invert_increasing(|t| self.diag(t), y, tol)
    }

    /// `scale·u + shift` within the same kind.
    pub fn affine(&self, scale: f64, shift: f64) -> Result<Self> {
        if !(scale > 0.0) {
            return Err(Error::NonPositiveAlpha);
        }
        let out = match self {
            Self::LinearWeighted { a, b, weights } => {
                Self::LinearWeighted { a: a * scale, b: b * scale + shift, weights: weights.clone() }
            }
            Self::ExponentialWeighted { a, b, beta, weights } => {
                Self::ExponentialWeighted { a: a * scale, b: b * scale + shift, beta: *beta, weights: weights.clone() }
            }
            Self::SumOfUnivariate { maps } => Self::SumOfUnivariate {
                maps: maps.iter().enumerate().map(|(i, m)| m.affine(scale, if i == 0 { shift } else { 0.0 })).collect(),
            },
        };
        Ok(out)
    }
}

/// A strictly increasing continuous scalar map used state-wise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarMap {
    /// `t ↦ scale·t + shift`.
    Affine { scale: f64, shift: f64 },
    /// Piecewise-linear table.
    Table { table: PiecewiseLinear },
    /// `t ↦ scale·f_u(t) + shift`.
    Diagonal { utility: Utility, scale: f64, shift: f64 },
}

impl ScalarMap {
    pub fn identity() -> Self {
        Self::Affine { scale: 1.0, shift: 0.0 }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Self::Affine { scale, shift } => scale * t + shift,
            Self::Table { table } => table.eval(t),
            Self::Diagonal { utility, scale, shift } => scale * utility.diag(t) + shift,
        }
    }

    pub fn inverse(&self, y: f64, tol: f64) -> Result<f64> {
        match self {
            Self::Affine { scale, shift } => Ok((y - shift) / scale),
            Self::Table { table } => Ok(table.inverse(y)),
            Self::Diagonal { utility, scale, shift } => utility.diag_inverse((y - shift) / scale, tol),
        }
    }

    pub fn affine(&self, alpha: f64, beta: f64) -> Self {
        match self {
            Self::Affine { scale, shift } => Self::Affine { scale: alpha * scale, shift: alpha * shift + beta },
            Self::Table { table } => Self::Table { table: table.affine(alpha, beta) },
            Self::Diagonal { utility, scale, shift } => {
                Self::Diagonal { utility: utility.clone(), scale: alpha * scale, shift: alpha * shift + beta }
            }
        }
    }
}

/// State-dependent utility `U(·, ω)`, strictly increasing in its first argument.
#[derive(Debug, Clone)]
pub struct StochasticUtility {
    space: SpaceRef,
    maps: Vec<ScalarMap>,
}

impl StochasticUtility {
    pub fn new(space: &SpaceRef, maps: Vec<ScalarMap>) -> Result<Self> {
        if maps.len() != space.len() {
            return Err(Error::DimMismatch { expected: space.len(), got: maps.len() });
        }
        Ok(Self { space: space.clone(), maps })
    }

    /// The same map at every state.
    pub fn deterministic(space: &SpaceRef, map: ScalarMap) -> Self {
        Self { space: space.clone(), maps: vec![map; space.len()] }
    }

    pub fn space(&self) -> &SpaceRef {
        &self.space
    }

    pub fn map_at(&self, state: usize) -> &ScalarMap {
        &self.maps[state]
    }

    pub fn eval(&self, state: usize, t: f64) -> f64 {
        self.maps[state].eval(t)
    }

    pub fn inverse(&self, state: usize, y: f64, tol: f64) -> Result<f64> {
        self.maps[state].inverse(y, tol)
    }

    /// `ω ↦ U(F(ω), ω)`.
    pub fn apply(&self, f: &RandomVariable) -> RandomVariable {
        RandomVariable::from_raw(
            &self.space,
            f.values().iter().enumerate().map(|(s, &v)| self.maps[s].eval(v)).collect(),
        )
    }

    /// `ω ↦ α(ω)·U(·, ω) + β(ω)`.
    pub fn affine_transform(&self, alpha: &RandomVariable, beta: &RandomVariable) -> Result<Self> {
        if alpha.values().len() != self.maps.len() || beta.values().len() != self.maps.len() {
            return Err(Error::SpaceMismatch);
        }
        if alpha.values().iter().any(|&a| !(a > 0.0)) {
            return Err(Error::NonPositiveAlpha);
        }
        let maps = self.maps.iter().enumerate().map(|(s, m)| m.affine(alpha.get(s), beta.get(s))).collect();
        Ok(Self { space: self.space.clone(), maps })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probspace::FiniteProbSpace;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn eval_examples() {
        let lin = Utility::linear(1.0, 0.0, vec![0.5, 0.5]).unwrap();
        assert_eq!(lin.eval(&[2.0, 4.0]), 3.0);
        let exp1 = Utility::exponential(1.0, 0.0, 1.0, vec![1.0]).unwrap();
        assert_eq!(exp1.eval(&[0.0]), -1.0);
        let exp2 = Utility::exponential(1.0, 0.0, 1.0, vec![0.5, 0.5]).unwrap();
        let l4 = 4f64.ln();
        assert!(close(exp2.eval(&[l4, l4]), -0.25, 1e-15));
    }

    #[test]
    fn diagonal_examples() {
        let lin = Utility::linear(1.0, 0.0, vec![0.2, 0.3, 0.5]).unwrap();
        assert!(close(lin.diag(1.7), 1.7, 1e-15));
        let exp = Utility::exponential(1.0, 0.0, 2.0, vec![0.5, 0.5]).unwrap();
        assert!(close(exp.diag(1.0), -0.135335283236612, 1e-12));
        let sum = Utility::sum_of(vec![PiecewiseLinear::identity(); 3]).unwrap();
        assert!(close(sum.diag(2.5), 7.5, 1e-14));
        assert!(close(sum.diag(-4.0), -12.0, 1e-14));
    }

    #[test]
    fn inverse_examples() {
        let lin = Utility::linear(1.0, 0.0, vec![1.0]).unwrap();
        assert_eq!(lin.diag_inverse(-3.25, 1e-10).unwrap(), -3.25);
        let exp = Utility::exponential(1.0, 0.0, 1.0, vec![1.0]).unwrap();
        assert!(close(exp.diag_inverse(-0.5, 1e-10).unwrap(), std::f64::consts::LN_2, 1e-12));
        assert!(matches!(exp.diag_inverse(0.5, 1e-10), Err(Error::OutOfRange { .. })));
        assert!(matches!(exp.diag_inverse_bisect(0.5, 1e-10), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(Utility::linear(0.0, 0.0, vec![1.0]).is_err());
        assert!(Utility::linear(1.0, 0.0, vec![0.5, 0.6]).is_err());
        assert!(Utility::exponential(1.0, 0.0, -1.0, vec![1.0]).is_err());
        assert!(Utility::linear(1.0, 0.0, vec![1.5, -0.5]).is_err());
        assert!(PiecewiseLinear::new(vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(PiecewiseLinear::new(vec![0.0], vec![1.0]).is_err());
    }

    #[test]
    fn table_extrapolates_and_inverts() {
        let t = PiecewiseLinear::new(vec![0.0, 1.0, 3.0], vec![0.0, 2.0, 3.0]).unwrap();
        assert_eq!(t.eval(0.5), 1.0);
        assert_eq!(t.eval(2.0), 2.5);
        assert_eq!(t.eval(-1.0), -2.0);
        assert_eq!(t.eval(5.0), 4.0);
        for y in [-3.0, 0.3, 2.2, 7.0] {
            assert!(close(t.eval(t.inverse(y)), y, 1e-14));
        }
    }

    #[test]
    fn affine_utility_keeps_shape() {
        let exp = Utility::exponential(1.0, 0.0, 1.0, vec![0.5, 0.5]).unwrap();
        let shifted = exp.affine(2.0, 1.0).unwrap();
        for x in [[0.3, -0.2], [1.0, 2.0]] {
            assert!(close(shifted.eval(&x), 2.0 * exp.eval(&x) + 1.0, 1e-14));
        }
        let sum = Utility::sum_of(vec![PiecewiseLinear::identity(); 2]).unwrap();
        let s2 = sum.affine(3.0, -1.0).unwrap();
        assert!(close(s2.eval(&[1.0, 2.0]), 8.0, 1e-14));
        assert_eq!(exp.affine(0.0, 1.0), Err(Error::NonPositiveAlpha));
    }

    #[test]
    fn stochastic_affine_transform_examples() {
        let space = FiniteProbSpace::uniform(2).unwrap();
        let id = StochasticUtility::deterministic(&space, ScalarMap::identity());
        let one = RandomVariable::constant(&space, 1.0);
        let zero = RandomVariable::constant(&space, 0.0);
        let same = id.affine_transform(&one, &zero).unwrap();
        assert_eq!(same.eval(0, 3.0), 3.0);

        let two = RandomVariable::constant(&space, 2.0);
        let t = id.affine_transform(&two, &one).unwrap();
        assert_eq!(t.eval(0, 1.5), 4.0);
        assert_eq!(t.eval(1, -1.0), -1.0);

        let alpha = RandomVariable::new(&space, vec![1.0, 2.0]).unwrap();
        let s = id.affine_transform(&alpha, &zero).unwrap();
        assert_eq!(s.eval(0, 3.0), 3.0);
        assert_eq!(s.eval(1, 3.0), 6.0);
        assert!(close(s.inverse(1, 6.0, 1e-12).unwrap(), 3.0, 1e-15));

        let bad = RandomVariable::new(&space, vec![1.0, 0.0]).unwrap();
        assert!(matches!(id.affine_transform(&bad, &zero), Err(Error::NonPositiveAlpha)));
    }
}
