//! Loop closure detection by sequence matching over per-frame descriptors.
//!
//! Two traversals of a route are described frame by frame
//! ([`descriptor`]), compared through a Euclidean difference matrix
//! ([`diffmatrix`]) and matched by summing differences along short
//! constant-speed trajectories ([`seqmatch`]). [`accel`] restricts the search
//! to windows around the previous frame's best candidates and [`online`]
//! tunes the number of windows while running. [`eval`] scores results
//! against ground truth and [`synth`] generates test traversals.

pub mod accel;
pub mod descriptor;
pub mod diffmatrix;
pub mod eval;
pub mod online;
pub mod seqmatch;
pub mod stats;
pub mod synth;

pub use accel::{match_accelerated, seed_candidates, AccelParams, CandidateSet};
pub use descriptor::{
    load_descriptor_file, normalize, pixel_descriptor, save_descriptor_file, validate_dim, Descriptor,
    DescriptorError, DescriptorSet, PixelDescriptorConfig,
};
pub use diffmatrix::{DifferenceMatrix, MatrixError};
pub use eval::{label_matches, pr_curve, Counts, EvalError, EvalReport, GroundTruth};
pub use online::{change_degree, match_online, OnlineError, OnlineOutcome, OnlineParams};
pub use seqmatch::{
    cal_seq_dif, match_all, sweep_speeds, FrameMatch, MatchError, MatchOutcome, MatchResult, MatcherParams,
    SeqScore,
};
pub use stats::{count_distance_evals, FrameStats, MatchStats, WorkTotals};
pub use synth::{generate_pair, SynthConfig, SynthError, SyntheticPair};
