//! Synthetic traversal pairs with exact ground truth.
//!
//! The reference traversal is a random walk on the unit sphere with a fixed
//! angular step, so neighbouring frames are similar. Query frame `j`
//! revisits reference frame `round(j * speed_ratio)` under a fixed
//! pairwise-coordinate rotation (viewpoint) plus isotropic Gaussian noise
//! (condition), then re-normalized.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::descriptor::{normalize, save_descriptor_file, Descriptor, DescriptorError, DescriptorSet, SYNTHETIC_TAG};
use crate::eval::{EvalError, GroundTruth, DEFAULT_TOLERANCE};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    /// Reference traversal length.
    pub n_frames: usize,
    pub dim: usize,
    /// Per-coordinate standard deviation of the query perturbation.
    pub condition_noise: f64,
    /// In [0, 0.5]; rotates coordinate pairs by `shift * π/2`.
    pub viewpoint_shift: f64,
    /// Reference frames advanced per query frame, in [0.8, 1.2].
    pub speed_ratio: f64,
    /// Angle in radians between consecutive reference frames.
    pub step_angle: f64,
    /// Reference frames at which the walk restarts from a fresh random
    /// point (abrupt scene change).
    pub jumps: Vec<usize>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_frames: 500,
            dim: 64,
            condition_noise: 0.1,
            viewpoint_shift: 0.0,
            speed_ratio: 1.0,
            step_angle: 0.25,
            jumps: Vec::new(),
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::BadConfig(m));
        if self.n_frames < 2 {
            return bad(format!("n_frames must be at least 2, got {}", self.n_frames));
        }
        if self.dim < 2 {
            return bad(format!("dim must be at least 2, got {}", self.dim));
        }
        if !self.condition_noise.is_finite() || self.condition_noise < 0.0 {
            return bad(format!("condition_noise must be finite and >= 0, got {}", self.condition_noise));
        }
        if !(0.0..=0.5).contains(&self.viewpoint_shift) {
            return bad(format!("viewpoint_shift must lie in [0, 0.5], got {}", self.viewpoint_shift));
        }
        if !(0.8..=1.2).contains(&self.speed_ratio) {
            return bad(format!("speed_ratio must lie in [0.8, 1.2], got {}", self.speed_ratio));
        }
        if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&self.step_angle) {
            return bad(format!("step_angle must lie in [0, π/2], got {}", self.step_angle));
        }
        Ok(())
    }

    /// Number of query frames: every query frame maps inside the reference.
    pub fn query_frames(&self) -> usize {
        ((self.n_frames - 1) as f64 / self.speed_ratio + 1e-9).floor() as usize + 1
    }

    pub fn ground_truth_ref(&self, query: usize) -> usize {
        ((query as f64 * self.speed_ratio).round() as usize).min(self.n_frames - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPair {
    pub reference: DescriptorSet,
    pub query: DescriptorSet,
    pub gt: GroundTruth,
}

fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        if let Ok(d) = normalize(&gaussian_vec(rng, dim)) {
            return d.into_values();
        }
    }
}

/// Moves `x` by `angle` along a random direction orthogonal to it.
fn step_on_sphere(rng: &mut ChaCha8Rng, x: &[f64], angle: f64) -> Vec<f64> {
    let dir = loop {
        let mut u = gaussian_vec(rng, x.len());
        let dot: f64 = u.iter().zip(x).map(|(a, b)| a * b).sum();
        for (ui, xi) in u.iter_mut().zip(x) {
            *ui -= dot * xi;
        }
        if let Ok(d) = normalize(&u) {
            break d.into_values();
        }
    };
    let (s, c) = angle.sin_cos();
    x.iter().zip(&dir).map(|(a, b)| c * a + s * b).collect()
}

/// Rotates each coordinate pair `(2k, 2k+1)` by `angle`, alternating sign
/// between pairs. An odd trailing coordinate is left alone.
fn rotate_pairs(x: &mut [f64], angle: f64) {
    let (s, c) = angle.sin_cos();
    for (k, pair) in x.chunks_exact_mut(2).enumerate() {
        let s = if k % 2 == 0 { s } else { -s };
        let (a, b) = (pair[0], pair[1]);
        pair[0] = c * a - s * b;
        pair[1] = s * a + c * b;
    }
}

pub fn generate_pair(config: &SynthConfig) -> Result<SyntheticPair, SynthError> {
    config.validate()?;
    let mut walk_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut query_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5EED_0FC0_FFEE);

    let mut reference: Vec<Descriptor> = Vec::with_capacity(config.n_frames);
    let mut x = random_unit(&mut walk_rng, config.dim);
    for i in 0..config.n_frames {
        if i > 0 {
            x = if config.jumps.contains(&i) {
                random_unit(&mut walk_rng, config.dim)
            } else {
                step_on_sphere(&mut walk_rng, &x, config.step_angle)
            };
        }
        let d = normalize(&x)?;
        x = d.values().to_vec();
        reference.push(d);
    }

    let identity = config.condition_noise == 0.0 && config.viewpoint_shift == 0.0;
    let rotation = config.viewpoint_shift * std::f64::consts::FRAC_PI_2;
    let m = config.query_frames();
    let mut query = Vec::with_capacity(m);
    let mut mapping = Vec::with_capacity(m);
    for j in 0..m {
        let r = config.ground_truth_ref(j);
        mapping.push(Some(r));
        if identity {
            query.push(reference[r].clone());
            continue;
        }
        let mut v = reference[r].values().to_vec();
        rotate_pairs(&mut v, rotation);
        if config.condition_noise > 0.0 {
            for vi in &mut v {
                let z: f64 = query_rng.sample(StandardNormal);
                *vi += config.condition_noise * z;
            }
        }
        query.push(normalize(&v)?);
    }

    Ok(SyntheticPair {
        reference: DescriptorSet::from_descriptors(&reference, SYNTHETIC_TAG)?,
        query: DescriptorSet::from_descriptors(&query, SYNTHETIC_TAG)?,
        gt: GroundTruth::new(mapping, DEFAULT_TOLERANCE),
    })
}

/// Writes `reference.sqds`, `query.sqds` and `gt.csv` into `dir`.
pub fn write_dataset(pair: &SyntheticPair, dir: impl AsRef<Path>) -> Result<(), SynthError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    save_descriptor_file(&pair.reference, dir.join("reference.sqds"))?;
    save_descriptor_file(&pair.query, dir.join("query.sqds"))?;
    let mut w = BufWriter::new(File::create(dir.join("gt.csv"))?);
    pair.gt.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::euclidean;

    #[test]
    fn noiseless_pair_is_identical() {
        let cfg = SynthConfig {
            n_frames: 50,
            condition_noise: 0.0,
            ..SynthConfig::default()
        };
        let pair = generate_pair(&cfg).unwrap();
        assert_eq!(pair.reference, pair.query);
        assert_eq!(pair.gt, GroundTruth::identity(50, 2));
    }

    #[test]
    fn speed_ratio_mapping() {
        let cfg = SynthConfig {
            n_frames: 100,
            speed_ratio: 1.2,
            ..SynthConfig::default()
        };
        let pair = generate_pair(&cfg).unwrap();
        assert_eq!(pair.gt.get(50), Some(60));
        assert_eq!(pair.query.len(), 83);
        assert!(pair.gt.validate(pair.reference.len()).is_ok());
        let slow = SynthConfig {
            speed_ratio: 0.8,
            ..cfg
        };
        assert_eq!(slow.query_frames(), 124);
        assert_eq!(slow.ground_truth_ref(123), 98);
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = SynthConfig {
            n_frames: 80,
            viewpoint_shift: 0.125,
            ..SynthConfig::default()
        };
        assert_eq!(generate_pair(&cfg).unwrap(), generate_pair(&cfg).unwrap());
        let other = SynthConfig { seed: 8, ..cfg.clone() };
        assert_ne!(generate_pair(&cfg).unwrap().reference, generate_pair(&other).unwrap().reference);
    }

    #[test]
    fn walk_has_fixed_step() {
        let cfg = SynthConfig {
            n_frames: 30,
            step_angle: 0.2,
            ..SynthConfig::default()
        };
        let pair = generate_pair(&cfg).unwrap();
        let chord = 2.0 * (0.1_f64).sin();
        for i in 1..30 {
            let d = euclidean(pair.reference.row(i - 1), pair.reference.row(i));
            assert!((d - chord).abs() < 1e-6, "step {i}: {d}");
        }
    }

    #[test]
    fn jumps_break_continuity() {
        let cfg = SynthConfig {
            n_frames: 30,
            dim: 128,
            jumps: vec![15],
            ..SynthConfig::default()
        };
        let pair = generate_pair(&cfg).unwrap();
        let across = euclidean(pair.reference.row(14), pair.reference.row(15));
        assert!(across > 1.0, "{across}");
    }

    #[test]
    fn rotation_preserves_norm() {
        let mut v = vec![0.6, 0.8, 0.0, 1.0, 0.5];
        let n0: f64 = v.iter().map(|x| x * x).sum();
        rotate_pairs(&mut v, 0.7);
        let n1: f64 = v.iter().map(|x| x * x).sum();
        assert!((n0 - n1).abs() < 1e-12);
        assert_eq!(v[4], 0.5);
    }

    #[test]
    fn rejects_bad_config() {
        for cfg in [
            SynthConfig { n_frames: 1, ..Default::default() },
            SynthConfig { dim: 1, ..Default::default() },
            SynthConfig { condition_noise: -0.1, ..Default::default() },
            SynthConfig { viewpoint_shift: 0.6, ..Default::default() },
            SynthConfig { speed_ratio: 1.5, ..Default::default() },
        ] {
            assert!(matches!(generate_pair(&cfg), Err(SynthError::BadConfig(_))));
        }
    }
}
