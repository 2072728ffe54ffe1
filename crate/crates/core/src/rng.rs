//! Seeded randomness.
//!
//! Every stochastic routine takes an explicit `u64` seed and builds its own
//! ChaCha8 stream, so results are independent of thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::scalar::Real;

pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable hash of a seed together with a path of coordinates.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix64(base), |acc, &p| mix64(acc ^ mix64(p)))
}

pub fn standard_normal<T: Real>(rng: &mut Rng) -> T {
    let x: f64 = StandardNormal.sample(rng);
    T::of(x)
}

pub fn normal_vec<T: Real>(rng: &mut Rng, len: usize) -> Vec<T> {
    (0..len).map(|_| standard_normal(rng)).collect()
}

/// Uniformly distributed unit vector.
pub fn unit_vector<T: Real>(rng: &mut Rng, d: usize) -> Vec<T> {
    loop {
        let v: Vec<T> = normal_vec(rng, d);
        let n = crate::linalg::norm(&v);
        if n > T::zero() {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}
