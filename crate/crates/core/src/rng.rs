//! Seeded randomness. Every stochastic component derives its stream from an
//! integer seed plus a fixed per-component salt, so streams never overlap.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::Matrix;

pub type Rng = ChaCha8Rng;

/// Deterministic generator for `(seed, salt)`.
pub fn seeded(seed: u64, salt: u64) -> Rng {
    // splitmix64 finaliser on the salt keeps nearby seeds decorrelated
    let mut z = salt.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    ChaCha8Rng::seed_from_u64(seed ^ z)
}

pub fn gaussian(rng: &mut Rng, std: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    z * std
}

pub fn gaussian_vec(rng: &mut Rng, len: usize, std: f64) -> Vec<f64> {
    (0..len).map(|_| gaussian(rng, std)).collect()
}

pub fn gaussian_matrix(rng: &mut Rng, rows: usize, cols: usize, std: f64) -> Matrix {
    Matrix::from_vec(rows, cols, gaussian_vec(rng, rows * cols, std)).expect("buffer sized from shape")
}

/// Fisher-Yates shuffle of `0..n`.
pub fn permutation(rng: &mut Rng, n: usize) -> Vec<usize> {
    use rand::Rng as _;
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    idx
}

/// Salts for each seeded component.
pub mod salt {
    pub const FACE_ENCODER: u64 = 1;
    pub const TEXT_ENCODER: u64 = 2;
    pub const VISUAL_FRONTEND: u64 = 3;
    pub const AUDIO_FRONTEND: u64 = 4;
    pub const PROMPT_TOKENS: u64 = 10;
    pub const POLARITY_PROJECTION: u64 = 11;
    pub const VISUAL_PROJECTION: u64 = 12;
    pub const AUDIO_PROJECTION: u64 = 13;
    pub const WEIGHT_GENERATOR: u64 = 14;
    pub const BATCH_ORDER: u64 = 20;
    pub const NOISE: u64 = 30;
}
