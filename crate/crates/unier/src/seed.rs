//! Deterministic seed derivation.
//!
//! Everything in the engine that draws randomness takes an explicit 64-bit
//! seed, and sub-streams (per student, per trial, per rollout) are derived
//! with [`derive()`] so that runs are reproducible regardless of execution
//! order or parallelism.

/// SplitMix64 finalizer; a fast, well-mixed 64-bit permutation.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

/// Derives an independent sub-stream seed from a base seed and a salt
/// (student index, trial index, rollout index, ...).
pub fn derive(base: u64, salt: u64) -> u64 {
    splitmix64(base ^ splitmix64(salt.wrapping_add(0xA076_1D64_78BD_642F)))
}
