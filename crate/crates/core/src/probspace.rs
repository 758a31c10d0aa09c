//! Finite probability spaces, sigma-algebras stored as partitions, random
//! vectors and the conditional expectation / conditional law machinery.
//!
//! All states carry strictly positive mass, so "almost surely" and
//! "at every state" coincide.

use std::cmp::Ordering;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Absolute tolerance for probability sums, measurability and law comparisons.
pub const EPS: f64 = 1e-12;

/// Shared handle to a probability space.
pub type SpaceRef = Arc<FiniteProbSpace>;

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteProbSpace {
    probs: Vec<f64>,
}

impl FiniteProbSpace {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::EmptySpace);
        }
        for (state, &prob) in probs.iter().enumerate() {
            if !prob.is_finite() || prob <= 0.0 {
                return Err(Error::NonPositiveProb { state, prob });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > EPS {
            return Err(Error::ProbSumMismatch { sum });
        }
        Ok(Self { probs })
    }

    /// Validates and wraps the space in a shared handle.
    pub fn shared(probs: Vec<f64>) -> Result<SpaceRef> {
        Self::new(probs).map(Arc::new)
    }

    pub fn uniform(n: usize) -> Result<SpaceRef> {
        if n == 0 {
            return Err(Error::EmptySpace);
        }
        Self::shared(vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, state: usize) -> f64 {
        self.probs[state]
    }
}

pub(crate) fn same_space(a: &SpaceRef, b: &SpaceRef) -> bool {
    Arc::ptr_eq(a, b) || a.probs == b.probs
}

fn ensure_same(a: &SpaceRef, b: &SpaceRef) -> Result<()> {
    if same_space(a, b) {
        Ok(())
    } else {
        Err(Error::SpaceMismatch)
    }
}

/// A sub-sigma-algebra of the power set, stored as a canonical partition:
/// every block is sorted and blocks are ordered by their smallest state.
#[derive(Debug, Clone)]
pub struct SigmaAlgebra {
    space: SpaceRef,
    blocks: Vec<Vec<usize>>,
    block_of: Vec<usize>,
}

impl PartialEq for SigmaAlgebra {
    fn eq(&self, other: &Self) -> bool {
        same_space(&self.space, &other.space) && self.blocks == other.blocks
    }
}

impl SigmaAlgebra {
    pub fn new(space: &SpaceRef, blocks: Vec<Vec<usize>>) -> Result<Self> {
        let n = space.len();
        let mut owner = vec![usize::MAX; n];
        for (b, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(Error::InvalidPartition(format!("block {b} is empty")));
            }
            for &s in block {
                if s >= n {
                    return Err(Error::InvalidPartition(format!("state {s} out of range for {n} states")));
                }
                if owner[s] != usize::MAX {
                    return Err(Error::InvalidPartition(format!("state {s} appears in more than one block")));
                }
                owner[s] = b;
            }
        }
        if let Some(s) = owner.iter().position(|&o| o == usize::MAX) {
            return Err(Error::InvalidPartition(format!("state {s} is not covered")));
        }
        Ok(Self::canonical(space, blocks))
    }

    fn canonical(space: &SpaceRef, mut blocks: Vec<Vec<usize>>) -> Self {
        for block in &mut blocks {
            block.sort_unstable();
        }
        blocks.sort_by_key(|b| b[0]);
        let mut block_of = vec![0; space.len()];
        for (b, block) in blocks.iter().enumerate() {
            for &s in block {
                block_of[s] = b;
            }
        }
        Self { space: space.clone(), blocks, block_of }
    }

    /// The trivial algebra `{∅, Ω}`.
    pub fn trivial(space: &SpaceRef) -> Self {
        Self::canonical(space, vec![(0..space.len()).collect()])
    }

    /// The power set: every state is its own block.
    pub fn discrete(space: &SpaceRef) -> Self {
        Self::canonical(space, (0..space.len()).map(|s| vec![s]).collect())
    }

    /// Groups states that share the same label.
    pub fn from_labels<L: Ord>(space: &SpaceRef, labels: &[L]) -> Result<Self> {
        if labels.len() != space.len() {
            return Err(Error::DimMismatch { expected: space.len(), got: labels.len() });
        }
        let mut order: Vec<usize> = (0..labels.len()).collect();
        order.sort_by(|&a, &b| labels[a].cmp(&labels[b]).then(a.cmp(&b)));
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        for (k, &s) in order.iter().enumerate() {
            if k == 0 || labels[order[k - 1]] != labels[s] {
                blocks.push(vec![s]);
            } else {
                blocks.last_mut().expect("non-empty").push(s);
            }
        }
        Ok(Self::canonical(space, blocks))
    }

    pub fn space(&self) -> &SpaceRef {
        &self.space
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn block_of(&self, state: usize) -> usize {
        self.block_of[state]
    }

    pub fn block_prob(&self, block: usize) -> f64 {
        self.blocks[block].iter().map(|&s| self.space.prob(s)).sum()
    }

    pub fn is_trivial(&self) -> bool {
        self.blocks.len() == 1
    }

    pub fn is_discrete(&self) -> bool {
        self.blocks.len() == self.space.len()
    }

    /// True iff `self` contains `coarse`, i.e. every block of `self` sits
    /// inside a block of `coarse`.
    pub fn refines(&self, coarse: &SigmaAlgebra) -> Result<bool> {
        ensure_same(&self.space, &coarse.space)?;
        Ok(self.blocks.iter().all(|block| {
            let owner = coarse.block_of[block[0]];
            block.iter().all(|&s| coarse.block_of[s] == owner)
        }))
    }

    /// Coarsest common refinement of two partitions.
    pub fn join(&self, other: &SigmaAlgebra) -> Result<SigmaAlgebra> {
        ensure_same(&self.space, &other.space)?;
        let labels: Vec<(usize, usize)> =
            (0..self.space.len()).map(|s| (self.block_of[s], other.block_of[s])).collect();
        Self::from_labels(&self.space, &labels)
    }

    /// Finest common coarsening (the intersection of the two algebras).
    pub fn meet(&self, other: &SigmaAlgebra) -> Result<SigmaAlgebra> {
        ensure_same(&self.space, &other.space)?;
        let n = self.space.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for block in self.blocks.iter().chain(other.blocks.iter()) {
            for &s in &block[1..] {
                let (a, b) = (find(&mut parent, block[0]), find(&mut parent, s));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let labels: Vec<usize> = (0..n).map(|s| find(&mut parent, s)).collect();
        Self::from_labels(&self.space, &labels)
    }

    /// Indicator mask of the union of the selected blocks.
    pub fn event(&self, selected_blocks: &[bool]) -> Vec<bool> {
        (0..self.space.len()).map(|s| selected_blocks[self.block_of[s]]).collect()
    }
}

/// State-indexed real vector (`d = 1` random element).
#[derive(Debug, Clone)]
pub struct RandomVariable {
    space: SpaceRef,
    values: Vec<f64>,
}

impl PartialEq for RandomVariable {
    fn eq(&self, other: &Self) -> bool {
        same_space(&self.space, &other.space) && self.values == other.values
    }
}

impl RandomVariable {
    pub fn new(space: &SpaceRef, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.len() {
            return Err(Error::DimMismatch { expected: space.len(), got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("random variable"));
        }
        Ok(Self { space: space.clone(), values })
    }

    pub(crate) fn from_raw(space: &SpaceRef, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), space.len());
        Self { space: space.clone(), values }
    }

    pub fn constant(space: &SpaceRef, c: f64) -> Self {
        Self::from_raw(space, vec![c; space.len()])
    }

    pub fn space(&self) -> &SpaceRef {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, state: usize) -> f64 {
        self.values[state]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(&self.space, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_with(&self, other: &RandomVariable, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        ensure_same(&self.space, &other.space)?;
        Ok(Self::from_raw(&self.space, self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect()))
    }

    /// `‖self − other‖_∞`.
    pub fn max_abs_diff(&self, other: &RandomVariable) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn expectation(&self) -> f64 {
        self.values.iter().zip(self.space.probs()).map(|(v, p)| v * p).sum()
    }

    /// `α·𝟙_d` as a random vector.
    pub fn diagonal(&self, dim: usize) -> RandomVector {
        let mut values = Vec::with_capacity(self.values.len() * dim);
        for &v in &self.values {
            values.extend(std::iter::repeat_n(v, dim));
        }
        RandomVector { space: self.space.clone(), dim, values }
    }

    /// `self·𝟙_A + other·𝟙_{A^c}`.
    pub fn splice(&self, other: &RandomVariable, event: &[bool]) -> Result<Self> {
        ensure_same(&self.space, &other.space)?;
        Ok(Self::from_raw(
            &self.space,
            (0..self.values.len()).map(|s| if event[s] { self.values[s] } else { other.values[s] }).collect(),
        ))
    }

    pub fn is_measurable(&self, algebra: &SigmaAlgebra) -> Result<bool> {
        ensure_same(&self.space, &algebra.space)?;
        Ok(algebra.blocks.iter().all(|block| {
            let v0 = self.values[block[0]];
            block.iter().all(|&s| (self.values[s] - v0).abs() <= EPS)
        }))
    }
}

/// State-indexed `n × d` real matrix, row-major.
#[derive(Debug, Clone)]
pub struct RandomVector {
    space: SpaceRef,
    dim: usize,
    values: Vec<f64>,
}

impl PartialEq for RandomVector {
    fn eq(&self, other: &Self) -> bool {
        same_space(&self.space, &other.space) && self.dim == other.dim && self.values == other.values
    }
}

impl RandomVector {
    pub fn from_rows(space: &SpaceRef, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() != space.len() {
            return Err(Error::DimMismatch { expected: space.len(), got: rows.len() });
        }
        let dim = rows.first().map(|r| r.len()).unwrap_or(0);
        if dim == 0 {
            return Err(Error::DimMismatch { expected: 1, got: 0 });
        }
        let mut values = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimMismatch { expected: dim, got: row.len() });
            }
            values.extend(row);
        }
        Self::from_flat(space, dim, values)
    }

    pub fn from_flat(space: &SpaceRef, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || values.len() != space.len() * dim {
            return Err(Error::DimMismatch { expected: space.len() * dim.max(1), got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("random vector"));
        }
        Ok(Self { space: space.clone(), dim, values })
    }

    /// The deterministic vector `x` at every state.
    pub fn constant(space: &SpaceRef, x: &[f64]) -> Self {
        let mut values = Vec::with_capacity(space.len() * x.len());
        for _ in 0..space.len() {
            values.extend_from_slice(x);
        }
        Self { space: space.clone(), dim: x.len(), values }
    }

    pub fn space(&self) -> &SpaceRef {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.values[state * self.dim..(state + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.dim)
    }

    pub fn coordinate(&self, j: usize) -> RandomVariable {
        RandomVariable::from_raw(&self.space, self.rows().map(|r| r[j]).collect())
    }

    /// Applies `f` row by row.
    pub fn map_rows(&self, f: impl Fn(&[f64]) -> f64) -> RandomVariable {
        RandomVariable::from_raw(&self.space, self.rows().map(f).collect())
    }

    /// `self·𝟙_A + other·𝟙_{A^c}`.
    pub fn splice(&self, other: &RandomVector, event: &[bool]) -> Result<Self> {
        ensure_same(&self.space, &other.space)?;
        if self.dim != other.dim {
            return Err(Error::DimMismatch { expected: self.dim, got: other.dim });
        }
        let mut values = Vec::with_capacity(self.values.len());
        for (s, &inside) in event.iter().enumerate() {
            values.extend_from_slice(if inside { self.row(s) } else { other.row(s) });
        }
        Ok(Self { space: self.space.clone(), dim: self.dim, values })
    }

    /// Entrywise combination of two vectors of equal shape.
    pub fn zip_with(&self, other: &RandomVector, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        ensure_same(&self.space, &other.space)?;
        if self.dim != other.dim {
            return Err(Error::DimMismatch { expected: self.dim, got: other.dim });
        }
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { space: self.space.clone(), dim: self.dim, values })
    }

    /// Componentwise `self + shift(ω)·𝟙_d`.
    pub fn shift(&self, shift: &RandomVariable) -> Result<Self> {
        ensure_same(&self.space, &shift.space)?;
        let mut values = self.values.clone();
        for (s, chunk) in values.chunks_mut(self.dim).enumerate() {
            for v in chunk {
                *v += shift.values[s];
            }
        }
        Ok(Self { space: self.space.clone(), dim: self.dim, values })
    }

    /// Rows permuted: output row `s` is input row `perm[s]`.
    pub fn permute_rows(&self, perm: &[usize]) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for &src in perm {
            values.extend_from_slice(self.row(src));
        }
        Self { space: self.space.clone(), dim: self.dim, values }
    }

    pub fn max_abs_diff(&self, other: &RandomVector) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn is_measurable(&self, algebra: &SigmaAlgebra) -> Result<bool> {
        ensure_same(&self.space, &algebra.space)?;
        Ok(algebra.blocks.iter().all(|block| {
            let r0 = self.row(block[0]);
            block.iter().all(|&s| self.row(s).iter().zip(r0).all(|(a, b)| (a - b).abs() <= EPS))
        }))
    }
}

/// `E[F | G]`: block-wise probability-weighted averages.
pub fn cond_expectation(f: &RandomVariable, algebra: &SigmaAlgebra) -> Result<RandomVariable> {
    ensure_same(&f.space, &algebra.space)?;
    let mut out = vec![0.0; f.values.len()];
    for block in &algebra.blocks {
        let (mut mass, mut acc) = (0.0, 0.0);
        for &s in block {
            let p = f.space.prob(s);
            mass += p;
            acc += p * f.values[s];
        }
        let avg = acc / mass;
        for &s in block {
            out[s] = avg;
        }
    }
    Ok(RandomVariable::from_raw(&f.space, out))
}

fn cmp_rows(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        if (x - y).abs() > EPS {
            return x.partial_cmp(y).unwrap_or(Ordering::Equal);
        }
    }
    Ordering::Equal
}

/// Conditional law of `x` on one block: sorted distinct rows with their
/// conditional probabilities.
fn block_law(x: &RandomVector, block: &[usize]) -> Vec<(Vec<f64>, f64)> {
    let mass: f64 = block.iter().map(|&s| x.space.prob(s)).sum();
    let mut rows: Vec<(&[f64], f64)> = block.iter().map(|&s| (x.row(s), x.space.prob(s) / mass)).collect();
    rows.sort_by(|a, b| cmp_rows(a.0, b.0));
    let mut law: Vec<(Vec<f64>, f64)> = Vec::new();
    for (row, w) in rows {
        match law.last_mut() {
            Some(last) if cmp_rows(&last.0, row) == Ordering::Equal => last.1 += w,
            _ => law.push((row.to_vec(), w)),
        }
    }
    law
}

fn laws_equal(a: &[(Vec<f64>, f64)], b: &[(Vec<f64>, f64)]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|((ra, wa), (rb, wb))| cmp_rows(ra, rb) == Ordering::Equal && (wa - wb).abs() <= EPS)
}

/// True iff `x` and `y` have the same conditional distribution given `algebra`.
pub fn cond_law_equal(x: &RandomVector, y: &RandomVector, algebra: &SigmaAlgebra) -> Result<bool> {
    ensure_same(&x.space, &y.space)?;
    ensure_same(&x.space, &algebra.space)?;
    if x.dim != y.dim {
        return Err(Error::DimMismatch { expected: x.dim, got: y.dim });
    }
    Ok(algebra.blocks.iter().all(|block| laws_equal(&block_law(x, block), &block_law(y, block))))
}

/// True iff the conditional law of `x` given `algebra` is the same on every
/// block, i.e. `x` is independent of `algebra`.
pub fn is_independent(x: &RandomVector, algebra: &SigmaAlgebra) -> Result<bool> {
    ensure_same(&x.space, &algebra.space)?;
    let first = block_law(x, &algebra.blocks[0]);
    Ok(algebra.blocks[1..].iter().all(|block| laws_equal(&first, &block_law(x, block))))
}

/// Product of two finite spaces.
#[derive(Debug, Clone)]
pub struct ProductSpace {
    pub space: SpaceRef,
    /// Partition by the first coordinate.
    pub first: SigmaAlgebra,
    /// Partition by the second coordinate.
    pub second: SigmaAlgebra,
    left: usize,
    right: usize,
}

impl ProductSpace {
    /// Product state index of `(i, j)`.
    pub fn state(&self, i: usize, j: usize) -> usize {
        i * self.right + j
    }

    pub fn factor_sizes(&self) -> (usize, usize) {
        (self.left, self.right)
    }

    /// Lifts a random vector on the second factor to the product space.
    pub fn lift_second(&self, x: &RandomVector) -> Result<RandomVector> {
        if x.space.len() != self.right {
            return Err(Error::SpaceMismatch);
        }
        let mut values = Vec::with_capacity(self.space.len() * x.dim);
        for _ in 0..self.left {
            values.extend_from_slice(&x.values);
        }
        RandomVector::from_flat(&self.space, x.dim, values)
    }

    /// Lifts a random vector on the first factor to the product space.
    pub fn lift_first(&self, x: &RandomVector) -> Result<RandomVector> {
        if x.space.len() != self.left {
            return Err(Error::SpaceMismatch);
        }
        let mut values = Vec::with_capacity(self.space.len() * x.dim);
        for i in 0..self.left {
            for _ in 0..self.right {
                values.extend_from_slice(x.row(i));
            }
        }
        RandomVector::from_flat(&self.space, x.dim, values)
    }
}

pub fn product_space(s1: &FiniteProbSpace, s2: &FiniteProbSpace) -> Result<ProductSpace> {
    let mut probs = Vec::with_capacity(s1.len() * s2.len());
    for &p in s1.probs() {
        for &q in s2.probs() {
            probs.push(p * q);
        }
    }
    // Renormalize away the rounding of the products.
    let sum: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= sum);
    let space = FiniteProbSpace::shared(probs)?;
    let right = s2.len();
    let first_labels: Vec<usize> = (0..space.len()).map(|s| s / right).collect();
    let second_labels: Vec<usize> = (0..space.len()).map(|s| s % right).collect();
    Ok(ProductSpace {
        first: SigmaAlgebra::from_labels(&space, &first_labels)?,
        second: SigmaAlgebra::from_labels(&space, &second_labels)?,
        space,
        left: s1.len(),
        right,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform4() -> SpaceRef {
        FiniteProbSpace::uniform(4).unwrap()
    }

    fn alg(space: &SpaceRef, blocks: &[&[usize]]) -> SigmaAlgebra {
        SigmaAlgebra::new(space, blocks.iter().map(|b| b.to_vec()).collect()).unwrap()
    }

    fn rv(space: &SpaceRef, v: &[f64]) -> RandomVariable {
        RandomVariable::new(space, v.to_vec()).unwrap()
    }

    #[test]
    fn new_space_validates() {
        assert_eq!(FiniteProbSpace::new(vec![0.5, 0.5]).unwrap().len(), 2);
        assert_eq!(FiniteProbSpace::new(vec![0.25; 4]).unwrap().len(), 4);
        assert!(matches!(FiniteProbSpace::new(vec![0.5, 0.5, 0.1]), Err(Error::ProbSumMismatch { .. })));
        assert!(matches!(FiniteProbSpace::new(vec![1.0, 0.0]), Err(Error::NonPositiveProb { state: 1, .. })));
        assert_eq!(FiniteProbSpace::new(vec![]), Err(Error::EmptySpace));
    }

    #[test]
    fn partition_validation() {
        let s = uniform4();
        assert!(SigmaAlgebra::new(&s, vec![vec![0, 1], vec![1, 2, 3]]).is_err());
        assert!(SigmaAlgebra::new(&s, vec![vec![0, 1], vec![2]]).is_err());
        assert!(SigmaAlgebra::new(&s, vec![vec![0, 1, 2, 3], vec![]]).is_err());
        let a = alg(&s, &[&[3, 2], &[1, 0]]);
        assert_eq!(a.blocks(), &[vec![0, 1], vec![2, 3]]);
    }

    #[test]
    fn refines_examples() {
        let s = uniform4();
        let disc = SigmaAlgebra::discrete(&s);
        let halves = alg(&s, &[&[0, 1], &[2, 3]]);
        let cross = alg(&s, &[&[0, 2], &[1, 3]]);
        assert!(disc.refines(&halves).unwrap());
        assert!(halves.refines(&SigmaAlgebra::trivial(&s)).unwrap());
        assert!(!halves.refines(&cross).unwrap());
        let other = FiniteProbSpace::uniform(4).map(|s| {
            // different Arc, same probabilities: still the same space
            SigmaAlgebra::trivial(&s)
        });
        assert!(halves.refines(&other.unwrap()).unwrap());
        let s3 = FiniteProbSpace::uniform(3).unwrap();
        assert_eq!(halves.refines(&SigmaAlgebra::trivial(&s3)), Err(Error::SpaceMismatch));
    }

    #[test]
    fn join_examples() {
        let s = uniform4();
        let halves = alg(&s, &[&[0, 1], &[2, 3]]);
        let cross = alg(&s, &[&[0, 2], &[1, 3]]);
        assert_eq!(halves.join(&halves).unwrap(), halves);
        assert_eq!(SigmaAlgebra::trivial(&s).join(&halves).unwrap(), halves);
        assert_eq!(halves.join(&cross).unwrap(), SigmaAlgebra::discrete(&s));
        assert_eq!(halves.meet(&cross).unwrap(), SigmaAlgebra::trivial(&s));
    }

    #[test]
    fn measurability_examples() {
        let s = uniform4();
        let halves = alg(&s, &[&[0, 1], &[2, 3]]);
        assert!(RandomVariable::constant(&s, 3.0).is_measurable(&halves).unwrap());
        assert!(!rv(&s, &[1.0, 3.0, 5.0, 7.0]).is_measurable(&halves).unwrap());
        assert!(rv(&s, &[2.0, 2.0, 6.0, 6.0]).is_measurable(&halves).unwrap());
        let x = RandomVector::from_rows(&s, vec![vec![1.0, 2.0], vec![1.0, 2.5], vec![0.0; 2], vec![0.0; 2]]).unwrap();
        assert!(!x.is_measurable(&halves).unwrap());
    }

    #[test]
    fn cond_expectation_examples() {
        let s = uniform4();
        let halves = alg(&s, &[&[0, 1], &[2, 3]]);
        let f = rv(&s, &[1.0, 3.0, 5.0, 7.0]);
        assert_eq!(cond_expectation(&f, &halves).unwrap().values(), &[2.0, 2.0, 6.0, 6.0]);
        assert_eq!(cond_expectation(&f, &SigmaAlgebra::discrete(&s)).unwrap(), f);
        let s2 = FiniteProbSpace::shared(vec![0.25, 0.75]).unwrap();
        let e = cond_expectation(&rv(&s2, &[1.0, 3.0]), &SigmaAlgebra::trivial(&s2)).unwrap();
        assert!(e.max_abs_diff(&RandomVariable::constant(&s2, 2.5)) < 1e-15);
    }

    #[test]
    fn cond_law_examples() {
        let s = FiniteProbSpace::uniform(2).unwrap();
        let triv = SigmaAlgebra::trivial(&s);
        let x = RandomVector::from_rows(&s, vec![vec![0.0], vec![1.0]]).unwrap();
        let y = RandomVector::from_rows(&s, vec![vec![1.0], vec![0.0]]).unwrap();
        assert!(cond_law_equal(&x, &x, &triv).unwrap());
        assert!(cond_law_equal(&x, &y, &triv).unwrap());
        assert!(!cond_law_equal(&x, &y, &SigmaAlgebra::discrete(&s)).unwrap());

        let skew = FiniteProbSpace::shared(vec![0.3, 0.7]).unwrap();
        let xs = RandomVector::from_rows(&skew, vec![vec![0.0], vec![1.0]]).unwrap();
        let ys = RandomVector::from_rows(&skew, vec![vec![1.0], vec![0.0]]).unwrap();
        assert!(!cond_law_equal(&xs, &ys, &SigmaAlgebra::trivial(&skew)).unwrap());

        let z = RandomVector::from_rows(&s, vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(cond_law_equal(&x, &z, &triv), Err(Error::DimMismatch { expected: 1, got: 2 }));
    }

    #[test]
    fn product_space_examples() {
        let u2 = FiniteProbSpace::new(vec![0.5, 0.5]).unwrap();
        let p = product_space(&u2, &u2).unwrap();
        assert_eq!(p.space.len(), 4);
        assert!(p.space.probs().iter().all(|&q| (q - 0.25).abs() < 1e-15));
        assert_eq!(p.first.blocks(), &[vec![0, 1], vec![2, 3]]);
        assert_eq!(p.second.blocks(), &[vec![0, 2], vec![1, 3]]);

        let one = FiniteProbSpace::new(vec![1.0]).unwrap();
        let q = product_space(&u2, &one).unwrap();
        assert_eq!(q.space.probs(), u2.probs());

        let skew = FiniteProbSpace::new(vec![0.3, 0.7]).unwrap();
        let r = product_space(&u2, &skew).unwrap();
        let expected = [0.15, 0.35, 0.15, 0.35];
        for (a, b) in r.space.probs().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }

        let x = RandomVector::from_rows(&FiniteProbSpace::shared(vec![0.3, 0.7]).unwrap(), vec![vec![1.0], vec![-2.0]])
            .unwrap();
        let lifted = r.lift_second(&x).unwrap();
        assert!(is_independent(&lifted, &r.first).unwrap());
        assert!(!is_independent(&lifted, &r.second).unwrap());
    }
}
