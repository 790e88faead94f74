//! Shared fixtures for the benchmarks.

use std::path::PathBuf;

use chainsynth::rl::PpoBatch;
use ndarray::{Array1, Array2};

/// The reference corpus shipped with the workspace.
pub fn corpus_dir() -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../corpus"))
}

/// A deterministic, fully populated PPO batch whose sequences end at
/// staggered lengths.
pub fn batch(rows: usize, cols: usize) -> PpoBatch {
    let wave = |i: usize, j: usize, k: f64| ((i * 31 + j * 7) as f64 * k).sin();
    let mask = Array2::from_shape_fn((rows, cols), |(i, j)| if j < cols - i % (cols / 2).max(1) { 1.0 } else { 0.0 });
    let logp_old = Array2::from_shape_fn((rows, cols), |(i, j)| -1.5 + wave(i, j, 0.37));
    let logp_policy = &logp_old + &Array2::from_shape_fn((rows, cols), |(i, j)| 0.3 * wave(i, j, 1.91));
    let logp_ref = &logp_old + &Array2::from_shape_fn((rows, cols), |(i, j)| 0.1 * wave(i, j, 0.73));
    let values = Array2::from_shape_fn((rows, cols), |(i, j)| wave(i, j, 0.11));
    let terminal_reward = Array1::from_shape_fn(rows, |i| (i % 2) as f64);
    PpoBatch { logp_policy, logp_old, logp_ref, values, mask, terminal_reward }
}

/// `n` words of prose-like text, varied by `salt`.
pub fn document(n: usize, salt: usize) -> String {
    (0..n).map(|i| format!("w{}", (i * 2654435761 + salt) % 997)).collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_is_valid() {
        let b = batch(8, 64);
        b.validate().unwrap();
        assert!(b.mask.rows().into_iter().all(|r| r.sum() >= 1.0));
    }
}
