use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::Tick;

/// Counter-based noise: every draw is keyed by `(seed, target id, tick,
/// stream)`, so results do not depend on evaluation order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NoiseSource {
    seed: u64,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME))
}

impl NoiseSource {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn rng(&self, target: &str, tick: Tick, stream: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&fnv1a(target.as_bytes()).to_le_bytes());
        key[16..24].copy_from_slice(&tick.to_le_bytes());
        key[24..].copy_from_slice(&stream.to_le_bytes());
        ChaCha8Rng::from_seed(key)
    }

    /// Uniform on `[−magnitude, magnitude]`.
    pub fn uniform(&self, target: &str, tick: Tick, stream: u64, magnitude: f64) -> f64 {
        if magnitude <= 0.0 {
            return 0.0;
        }
        self.rng(target, tick, stream).random_range(-magnitude..=magnitude)
    }

    /// Uniform integer on `[−⌊magnitude⌋, ⌊magnitude⌋]`.
    pub fn uniform_units(&self, target: &str, tick: Tick, stream: u64, magnitude: f64) -> i64 {
        let m = crate::num::floor(magnitude.max(0.0)) as i64;
        if m == 0 {
            return 0;
        }
        self.rng(target, tick, stream).random_range(-m..=m)
    }
}
