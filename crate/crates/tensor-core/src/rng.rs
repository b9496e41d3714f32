//! Seeded random streams. All initialization draws from xoshiro256++ so a seed
//! yields the same values on every platform.

use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
pub use rand_xoshiro::Xoshiro256PlusPlus as Rng;

use crate::tensor::Tensor;

pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// `rows × cols` draws from N(0, std²).
pub fn normal(rng: &mut Rng, rows: usize, cols: usize, std: f64) -> Tensor {
    let dist = Normal::new(0.0, std).expect("finite standard deviation");
    Tensor {
        rows,
        cols,
        data: (0..rows * cols).map(|_| dist.sample(rng)).collect(),
    }
}

/// `rows × cols` draws from U(lo, hi).
pub fn uniform(rng: &mut Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    use rand::Rng as _;
    Tensor {
        rows,
        cols,
        data: (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect(),
    }
}
