//! Seeded generators for random measurable inputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::probspace::{RandomVariable, RandomVector, SigmaAlgebra};

/// Independent, reproducible stream for trial `k` of a check seeded with `seed`.
pub fn trial_rng(seed: u64, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    rng
}

/// Uniform values on `[lo, hi]`, constant on the blocks of `algebra`.
pub fn measurable_vector(rng: &mut impl Rng, algebra: &SigmaAlgebra, dim: usize, lo: f64, hi: f64) -> RandomVector {
    let draws: Vec<f64> = (0..algebra.num_blocks() * dim).map(|_| rng.gen_range(lo..=hi)).collect();
    let n = algebra.space().len();
    let mut values = Vec::with_capacity(n * dim);
    for s in 0..n {
        let b = algebra.block_of(s);
        values.extend_from_slice(&draws[b * dim..(b + 1) * dim]);
    }
    RandomVector::from_flat(algebra.space(), dim, values).expect("finite draws")
}

pub fn measurable_variable(rng: &mut impl Rng, algebra: &SigmaAlgebra, lo: f64, hi: f64) -> RandomVariable {
    measurable_vector(rng, algebra, 1, lo, hi).coordinate(0)
}

/// Non-negative measurable perturbation. Each block entry is zero with
/// probability `zero_prob`, otherwise uniform on `(0, 1]`. When `nonzero`
/// is set, at least one entry is forced positive.
pub fn nonneg_perturbation(
    rng: &mut impl Rng,
    algebra: &SigmaAlgebra,
    dim: usize,
    zero_prob: f64,
    nonzero: bool,
) -> RandomVector {
    let m = algebra.num_blocks() * dim;
    let mut draws: Vec<f64> =
        (0..m).map(|_| if rng.gen_bool(zero_prob) { 0.0 } else { rng.gen_range(0.05..=1.0) }).collect();
    if nonzero && draws.iter().all(|&v| v == 0.0) {
        let k = rng.gen_range(0..m);
        draws[k] = rng.gen_range(0.05..=1.0);
    }
    let n = algebra.space().len();
    let mut values = Vec::with_capacity(n * dim);
    for s in 0..n {
        let b = algebra.block_of(s);
        values.extend_from_slice(&draws[b * dim..(b + 1) * dim]);
    }
    RandomVector::from_flat(algebra.space(), dim, values).expect("finite draws")
}

/// State mask of a random union of blocks.
pub fn random_event(rng: &mut impl Rng, algebra: &SigmaAlgebra) -> Vec<bool> {
    let picks: Vec<bool> = (0..algebra.num_blocks()).map(|_| rng.gen_bool(0.5)).collect();
    algebra.event(&picks)
}
