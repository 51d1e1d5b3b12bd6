//! Perturbation protocols: sparsity subsampling, cold-start truncation,
//! and label noise.
//!
//! All three preserve the student set, the exercise bank and the Q-matrix;
//! only histories change. Per-student randomness is derived from the
//! protocol seed and the student index, so results do not depend on
//! iteration or execution order.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::core::{History, Interaction, StudentId};
use crate::seed;

use super::{DataError, Dataset};

// floor(r * len) guarded against binary rounding droop (0.15 * 20 must be 3).
fn scaled_count(ratio: f64, len: usize) -> usize {
    ((ratio * len as f64) + 1e-9).floor() as usize
}

// k distinct indices from 0..n by partial Fisher-Yates, returned sorted.
fn sample_indices(n: usize, k: usize, rng: &mut StdRng) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.gen_range(i..n);
        pool.swap(i, j);
    }
    let mut picked: Vec<usize> = pool[..k].to_vec();
    picked.sort_unstable();
    picked
}

/// Keeps exactly floor(keep_ratio * len) interactions per student, sampled
/// uniformly without replacement, original order preserved.
pub fn perturb_sparsity(d: &Dataset, keep_ratio: f64, seed: u64) -> Result<Dataset, DataError> {
    if !(keep_ratio > 0.0 && keep_ratio <= 1.0) {
        return Err(DataError::BadRatio(keep_ratio));
    }
    let mut out = d.clone();
    for (s, h) in d.logs.iter().enumerate() {
        let keep = scaled_count(keep_ratio, h.len());
        let mut rng = StdRng::seed_from_u64(seed::derive(seed, s as u64));
        let picked = sample_indices(h.len(), keep, &mut rng);
        let items: Vec<Interaction> = picked.iter().map(|&i| h.items()[i]).collect();
        out.logs[s] = History::with_items(StudentId(s as u32), items)?;
    }
    Ok(out)
}

/// Truncates every history to its first `max_len` interactions.
pub fn perturb_coldstart(d: &Dataset, max_len: usize) -> Result<Dataset, DataError> {
    if max_len == 0 {
        return Err(DataError::BadConfig("cold-start length must be at least 1".into()));
    }
    let mut out = d.clone();
    for (s, h) in d.logs.iter().enumerate() {
        out.logs[s] = h.truncated(max_len);
    }
    Ok(out)
}

/// Flips exactly floor(flip_ratio * len) distinct correctness labels per
/// student. Applying the same seed twice restores the original dataset
/// (flipping is an involution on the same index set).
pub fn perturb_noise(d: &Dataset, flip_ratio: f64, seed: u64) -> Result<Dataset, DataError> {
    if !(0.0..=1.0).contains(&flip_ratio) {
        return Err(DataError::BadRatio(flip_ratio));
    }
    let mut out = d.clone();
    for (s, h) in d.logs.iter().enumerate() {
        let flips = scaled_count(flip_ratio, h.len());
        let mut rng = StdRng::seed_from_u64(seed::derive(seed, s as u64));
        let picked = sample_indices(h.len(), flips, &mut rng);
        let mut items: Vec<Interaction> = h.items().to_vec();
        for &i in &picked {
            items[i].correct = !items[i].correct;
        }
        out.logs[s] = History::with_items(StudentId(s as u32), items)?;
    }
    Ok(out)
}
