//! Reproducible random streams.
//!
//! Every random draw in a run comes from a ChaCha8 stream whose 256-bit key
//! is a pure function of `(master seed, purpose, index words)`: the words are
//! folded through SplitMix64 and the running state is expanded into four
//! key words. Trials can therefore execute in any order, on any number of
//! threads, and still see identical inputs.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::CVector;

/// What a stream is used for. The discriminant is part of the key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Schedule = 1,
    Codebook = 2,
    Placement = 3,
    Channel = 4,
    Noise = 5,
    Validation = 6,
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream for `(seed, purpose, index...)`.
pub fn stream(seed: u64, purpose: Purpose, index: &[u64]) -> ChaCha8Rng {
    let mut state = seed;
    let mut acc = splitmix64(&mut state) ^ purpose as u64;
    for &word in index {
        let mut s = acc ^ word.wrapping_mul(GOLDEN);
        acc = splitmix64(&mut s);
    }
    let mut key = [0u8; 32];
    let mut s = acc;
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut s).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// One circularly-symmetric `CN(0, 1)` sample.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// `len` i.i.d. `CN(0, variance)` samples.
pub fn complex_normal_vector<R: Rng + ?Sized>(rng: &mut R, len: usize, variance: f64) -> CVector {
    let scale = variance.sqrt();
    CVector::from_fn(len, |_, _| complex_normal(rng) * scale)
}
