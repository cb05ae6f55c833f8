//! Seed derivation for reproducible, schedule-independent randomness.
//!
//! Every parallel lane (per-sample channel noise, per-draw smoothing noise)
//! owns an RNG derived from the master seed and its logical position, so
//! results do not depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Pipeline RNG. ChaCha8 is fast, seedable, and portable across platforms.
pub type PipelineRng = ChaCha8Rng;

/// SplitMix64 finalizer; decorrelates structured (seed, index) pairs.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// RNG for a logical substream of `seed`, e.g. (epoch, sample index).
pub fn substream(seed: u64, lane: u64, index: u64) -> PipelineRng {
    let s = mix(seed ^ mix(lane.wrapping_mul(0x2545f4914f6cdd1d) ^ mix(index)));
    ChaCha8Rng::seed_from_u64(s)
}

/// Top-level RNG for a master seed.
pub fn master(seed: u64) -> PipelineRng {
    ChaCha8Rng::seed_from_u64(seed)
}
