//! Fixtures shared by the matching benchmarks.

use seqcnn_core::{generate_pair, SynthConfig, SyntheticPair};

/// A route of `n_frames` under moderate appearance and viewpoint change.
pub fn route(n_frames: usize, seed: u64) -> SyntheticPair {
    generate_pair(&SynthConfig {
        n_frames,
        dim: 64,
        condition_noise: 0.1,
        viewpoint_shift: 0.125,
        seed,
        ..SynthConfig::default()
    })
    .expect("fixed fixture config is valid")
}
