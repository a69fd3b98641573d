//! Wiener increments keyed by `(seed, trajectory, step)`.
//!
//! Each trajectory reads its own ChaCha8 stream (`stream = trajectory
//! index`), and every step consumes exactly two 64-bit words turned into a
//! pair of normals by Box–Muller. The pair for any step is therefore a pure
//! function of the three keys, independent of scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analytics::UnravellingCoefficients;

/// 32-bit words consumed per step.
const WORDS_PER_STEP: u128 = 4;

#[derive(Debug, Clone)]
pub struct NoiseStream {
    seed: u64,
    trajectory: u64,
    step: u64,
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(seed: u64, trajectory: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trajectory);
        Self {
            seed,
            trajectory,
            step: 0,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn trajectory(&self) -> u64 {
        self.trajectory
    }

    /// Index of the next step to be drawn.
    pub fn step(&self) -> u64 {
        self.step
    }

    /// Repositions the stream so the next draw belongs to `step`.
    pub fn seek(&mut self, step: u64) {
        self.rng.set_word_pos(step as u128 * WORDS_PER_STEP);
        self.step = step;
    }

    /// Two independent standard normals.
    pub fn standard_pair(&mut self) -> [f64; 2] {
        let a: u64 = self.rng.random();
        let b: u64 = self.rng.random();
        self.step += 1;
        // (0, 1] so the logarithm stays finite
        let u1 = ((a >> 11) as f64 + 1.0) * (1.0 / 9_007_199_254_740_992.0);
        let u2 = (b >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0);
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        [r * c, r * s]
    }

    /// Decorrelated increments `(dw̃_A, dw̃_B)` with variance `dt` each.
    pub fn next_pair(&mut self, dt: f64) -> [f64; 2] {
        let z = self.standard_pair();
        let sd = dt.sqrt();
        [z[0] * sd, z[1] * sd]
    }
}

/// `n_steps` increment pairs from the start of `stream`. With `correlated`
/// set, the pairs are `dw = M dw̃` and carry covariance `C dt`.
pub fn generate_increments(
    stream: &NoiseStream,
    n_steps: usize,
    dt: f64,
    correlated: bool,
    coeffs: &UnravellingCoefficients,
) -> Vec<[f64; 2]> {
    let mut s = NoiseStream::new(stream.seed, stream.trajectory);
    (0..n_steps)
        .map(|_| {
            let w = s.next_pair(dt);
            if correlated {
                coeffs.correlate(w)
            } else {
                w
            }
        })
        .collect()
}

/// Splits the interval increment `dw` (variance `dt`) into two halves with
/// the Brownian bridge; `z` is a standard normal.
pub fn bridge_split(dw: f64, dt: f64, z: f64) -> (f64, f64) {
    let first = 0.5 * dw + 0.5 * dt.sqrt() * z;
    (first, dw - first)
}
