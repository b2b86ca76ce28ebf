//! Input sample streams.

use alloc::vec::Vec;

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

use crate::energy::{hamming_distance, Pattern};

/// Peak value of the `signal` pattern.
pub const SIGNAL_AMPLITUDE: f64 = (1u32 << 30) as f64;
/// Samples per period of the `signal` pattern.
pub const SIGNAL_PERIOD: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatternSpec {
    pub kind: Pattern,
    pub length: usize,
    pub seed: u64,
}

/// Sample `n` of the sine pattern as a two's complement word.
pub fn signal_sample(n: usize) -> u32 {
    let phase = 2.0 * core::f64::consts::PI * (n % SIGNAL_PERIOD) as f64 / SIGNAL_PERIOD as f64;
    libm::round(SIGNAL_AMPLITUDE * libm::sin(phase)) as i32 as u32
}

/// Deterministic stream for `spec`. Random kinds draw splitmix64 words
/// from the seed and keep the low K bits.
pub fn gen_pattern(spec: &PatternSpec) -> Vec<u32> {
    match spec.kind {
        Pattern::Zeros => alloc::vec![0; spec.length],
        Pattern::Signal => (0..spec.length).map(signal_sample).collect(),
        kind => {
            let bits = kind.random_bits().expect("random pattern");
            let mask = if bits == 32 { u32::MAX } else { (1u32 << bits) - 1 };
            let mut rng = SplitMix64::seed_from_u64(spec.seed);
            (0..spec.length).map(|_| rng.next_u32() & mask).collect()
        }
    }
}

/// Mean hamming distance between neighbouring words.
pub fn mean_consecutive_hamming(words: &[u32]) -> f64 {
    if words.len() < 2 {
        return 0.0;
    }
    let total: u64 = words
        .windows(2)
        .map(|w| u64::from(hamming_distance(w[0], w[1])))
        .sum();
    total as f64 / (words.len() - 1) as f64
}
