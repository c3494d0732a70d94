//! Deterministic random-number streams.
//!
//! Every stochastic component of the crate (parameter init, function
//! sampling, rollout noise, evaluation repetitions) draws from its own
//! ChaCha stream derived from a master seed plus a fixed set of tags, so
//! any run is reproducible from the master seed alone and independent
//! traces never share a stream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream tags. Each stochastic site in the crate owns one.
pub mod tag {
    pub const PARAM_INIT: u64 = 0x01;
    pub const TRAIN_FN: u64 = 0x02;
    pub const TRAIN_ROLLOUT: u64 = 0x03;
    pub const TRAIN_CONSTRAINT: u64 = 0x04;
    pub const VALIDATION_FN: u64 = 0x05;
    pub const VALIDATION_ROLLOUT: u64 = 0x06;
    pub const EVAL_TRACE: u64 = 0x07;
    pub const SUITE_FN: u64 = 0x08;
    pub const EVAL_CONSTRAINT: u64 = 0x09;
    pub const GRID_SEARCH: u64 = 0x0a;
    pub const VALIDATION_CONSTRAINT: u64 = 0x0b;
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent stream from a master seed and a tag path,
/// e.g. `stream(master, &[tag::EVAL_TRACE, function_id, repetition])`.
pub fn stream(master: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut state = master ^ 0x6a09_e667_f3bc_c908;
    let mut acc = splitmix64(&mut state);
    for &t in tags {
        state ^= t.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        acc ^= splitmix64(&mut state);
    }
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        state ^= acc;
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

/// Uniform draw from `[lo, hi)`.
pub fn uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

/// Uniform point in the box `[lo, hi)^d`.
pub fn uniform_vec<R: Rng>(rng: &mut R, d: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..d).map(|_| uniform(rng, lo, hi)).collect()
}

/// Standard normal draw via Box-Muller. Consumes exactly two uniforms.
pub fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>(); // (0, 1], keeps ln finite
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn normal_vec<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    (0..d).map(|_| standard_normal(rng)).collect()
}

/// Normal(mean, sd) truncated to strictly positive values by resampling.
pub fn truncated_normal_positive<R: Rng>(rng: &mut R, mean: f64, sd: f64) -> f64 {
    loop {
        let x = mean + sd * standard_normal(rng);
        if x > 0.0 {
            return x;
        }
    }
}
