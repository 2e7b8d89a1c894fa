//! Seeded randomness.
//!
//! All randomness in the pipeline comes from ChaCha8 (`rand_chacha`) seeded
//! with `seed_from_u64`. Independent work items (patch `i` of batch `j`, ...)
//! draw from their own stream so they can be produced in any order, on any
//! number of workers, and still be bit-identical across platforms.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::math::{ln, sin_cos, sqrt};

pub type PipelineRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> PipelineRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for work item `item` under `seed`.
pub fn stream(seed: u64, item: u64) -> PipelineRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(item);
    rng
}

/// Combines several counters into one stream id (splitmix64 finalizer).
pub fn mix(parts: &[u64]) -> u64 {
    let mut h = 0x9E37_79B9_7F4A_7C15u64;
    for &p in parts {
        let mut z = h ^ p.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

/// Uniform integer in `[0, n)`. Sampled through `u64` so the result does not
/// depend on the platform's pointer width.
pub fn below<R: RngCore>(rng: &mut R, n: usize) -> usize {
    debug_assert!(n > 0);
    rng.random_range(0..n as u64) as usize
}

/// Uniform float in `[0, 1)`.
pub fn unit<R: RngCore>(rng: &mut R) -> f64 {
    rng.random::<f64>()
}

pub fn coin<R: RngCore>(rng: &mut R, p: f64) -> bool {
    unit(rng) < p
}

/// Standard normal deviate (Box-Muller).
pub fn normal<R: RngCore>(rng: &mut R) -> f64 {
    let u1 = 1.0 - unit(rng);
    let u2 = unit(rng);
    let (s, _) = sin_cos(core::f64::consts::TAU * u2);
    sqrt(-2.0 * ln(u1)) * s
}
